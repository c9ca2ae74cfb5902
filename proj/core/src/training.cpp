#include "vipcap/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

#include <fmt/format.h>

#include "vipcap/error.hpp"
#include "vipcap/features_io.hpp"
#include "vipcap/optimizer.hpp"

namespace vipcap {
namespace {

template <typename T>
void read_field(const nlohmann::json& j, const char* key, T& out) {
    try {
        out = j.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::Input, fmt::format("config field '{}': {}", key, e.what()));
    }
}

nlohmann::json decoder_json(const DecoderConfig& d) {
    return {{"vocab_size", d.vocab_size}, {"d_model", d.d_model},         {"num_layers", d.num_layers},
            {"num_heads", d.num_heads},   {"max_context", d.max_context}, {"mlp_mult", d.mlp_mult}};
}

DecoderConfig decoder_from_json(const nlohmann::json& j) {
    DecoderConfig d;
    for (const auto& [key, _] : j.items()) {
        if (key == "vocab_size") read_field(j, "vocab_size", d.vocab_size);
        else if (key == "d_model") read_field(j, "d_model", d.d_model);
        else if (key == "num_layers") read_field(j, "num_layers", d.num_layers);
        else if (key == "num_heads") read_field(j, "num_heads", d.num_heads);
        else if (key == "max_context") read_field(j, "max_context", d.max_context);
        else if (key == "mlp_mult") read_field(j, "mlp_mult", d.mlp_mult);
        else fail(ErrorKind::Input, fmt::format("unknown decoder config field '{}'", key));
    }
    return d;
}

void restore_trainable(ParameterStore& params, const std::set<std::string>& trainable) {
    for (const auto& name : params.names()) params.set_trainable(name, trainable.contains(name));
}

std::set<std::string> trainable_names(const ParameterStore& params) {
    std::set<std::string> out;
    for (const auto& [name, var] : params) {
        if (var.requires_grad()) out.insert(name);
    }
    return out;
}

void check_finite_loss(double loss, std::uint64_t step, std::string_view id) {
    if (!std::isfinite(loss)) {
        fail(ErrorKind::Numeric, fmt::format("non-finite loss {} at step {} (example '{}')", loss, step, id));
    }
}

}  // namespace

void TrainConfig::validate() const {
    require(batch_size >= 1, ErrorKind::Config, "batch_size must be >= 1");
    require(M >= 1, ErrorKind::Config, "M must be >= 1");
    require(alpha >= 0.0, ErrorKind::Config, "alpha must be >= 0");
    require(k >= 0, ErrorKind::Config, "k must be >= 0");
    require(learning_rate >= 0.0, ErrorKind::Config, "learning_rate must be >= 0");
    require(epochs >= 0, ErrorKind::Config, "epochs must be >= 0");
    require(decoder_pretrain_epochs >= 0, ErrorKind::Config, "decoder_pretrain_epochs must be >= 0");
    model_config().validate();
}

ModelConfig TrainConfig::model_config() const {
    ModelConfig m;
    m.encoder.image_dim = image_dim;
    m.encoder.text_dim = text_dim;
    m.encoder.num_patches = num_patches;
    m.encoder.max_text_tokens = max_text_tokens;
    m.encoder.mode = EncoderMode::Synthetic;
    m.vip.image_dim = image_dim;
    m.vip.text_dim = text_dim;
    m.vip.head_layers = head_layers;
    m.vip.alpha = alpha;
    m.vip.noise = noise_variant;
    m.vip.use_omega = use_omega;
    m.vip.use_alpha = use_alpha;
    m.vip.num_samples = M;
    m.vip.use_patch_retrieval = use_patch_retrieval;
    m.vip.ffn = FFNConfig{1, ffn_heads, ffn_head_dim, ffn_hidden_mult, ffn_variant};
    m.decoder = decoder;
    m.adapter = adapter;
    m.retrieval.k = k;
    return m;
}

nlohmann::json to_json(const TrainConfig& c) {
    return {
        {"name", c.name},
        {"batch_size", c.batch_size},
        {"M", c.M},
        {"alpha", c.alpha},
        {"k", c.k},
        {"noise_variant", std::string(to_string(c.noise_variant))},
        {"use_patch_retrieval", c.use_patch_retrieval},
        {"use_omega", c.use_omega},
        {"use_alpha", c.use_alpha},
        {"ffn_variant", std::string(to_string(c.ffn_variant))},
        {"learning_rate", c.learning_rate},
        {"epochs", c.epochs},
        {"seed", c.seed},
        {"stop_loss", c.stop_loss},
        {"image_dim", c.image_dim},
        {"text_dim", c.text_dim},
        {"num_patches", c.num_patches},
        {"max_text_tokens", c.max_text_tokens},
        {"head_layers", c.head_layers},
        {"ffn_heads", c.ffn_heads},
        {"ffn_head_dim", c.ffn_head_dim},
        {"ffn_hidden_mult", c.ffn_hidden_mult},
        {"decoder", decoder_json(c.decoder)},
        {"adapter", {{"num_heads", c.adapter.num_heads}, {"head_dim", c.adapter.head_dim}}},
        {"decoder_pretrain_epochs", c.decoder_pretrain_epochs},
        {"decoder_pretrain_lr", c.decoder_pretrain_lr},
    };
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
    require(j.is_object(), ErrorKind::Input, "train config must be a JSON object");
    TrainConfig c;
    for (const auto& [key, value] : j.items()) {
        if (key == "name") read_field(j, "name", c.name);
        else if (key == "batch_size") read_field(j, "batch_size", c.batch_size);
        else if (key == "M") read_field(j, "M", c.M);
        else if (key == "alpha") read_field(j, "alpha", c.alpha);
        else if (key == "k") read_field(j, "k", c.k);
        else if (key == "noise_variant") c.noise_variant = parse_noise_variant(value.get<std::string>());
        else if (key == "use_patch_retrieval") read_field(j, "use_patch_retrieval", c.use_patch_retrieval);
        else if (key == "use_omega") read_field(j, "use_omega", c.use_omega);
        else if (key == "use_alpha") read_field(j, "use_alpha", c.use_alpha);
        else if (key == "ffn_variant") c.ffn_variant = parse_fusion_variant(value.get<std::string>());
        else if (key == "learning_rate") read_field(j, "learning_rate", c.learning_rate);
        else if (key == "epochs") read_field(j, "epochs", c.epochs);
        else if (key == "seed") read_field(j, "seed", c.seed);
        else if (key == "stop_loss") read_field(j, "stop_loss", c.stop_loss);
        else if (key == "image_dim") read_field(j, "image_dim", c.image_dim);
        else if (key == "text_dim") read_field(j, "text_dim", c.text_dim);
        else if (key == "num_patches") read_field(j, "num_patches", c.num_patches);
        else if (key == "max_text_tokens") read_field(j, "max_text_tokens", c.max_text_tokens);
        else if (key == "head_layers") read_field(j, "head_layers", c.head_layers);
        else if (key == "ffn_heads") read_field(j, "ffn_heads", c.ffn_heads);
        else if (key == "ffn_head_dim") read_field(j, "ffn_head_dim", c.ffn_head_dim);
        else if (key == "ffn_hidden_mult") read_field(j, "ffn_hidden_mult", c.ffn_hidden_mult);
        else if (key == "decoder") c.decoder = decoder_from_json(value);
        else if (key == "adapter") {
            for (const auto& [akey, _] : value.items()) {
                if (akey == "num_heads") read_field(value, "num_heads", c.adapter.num_heads);
                else if (akey == "head_dim") read_field(value, "head_dim", c.adapter.head_dim);
                else fail(ErrorKind::Input, fmt::format("unknown adapter config field '{}'", akey));
            }
        }
        else if (key == "decoder_pretrain_epochs") read_field(j, "decoder_pretrain_epochs", c.decoder_pretrain_epochs);
        else if (key == "decoder_pretrain_lr") read_field(j, "decoder_pretrain_lr", c.decoder_pretrain_lr);
        else fail(ErrorKind::Input, fmt::format("unknown config field '{}'", key));
    }
    c.validate();
    return c;
}

TrainConfig load_train_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    require(in.good(), ErrorKind::Io, fmt::format("cannot open '{}'", path.string()));
    try {
        return train_config_from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::parse_error& e) {
        fail(ErrorKind::Decode, fmt::format("{}: {}", path.string(), e.what()));
    }
}

std::vector<Example> load_dataset(const std::filesystem::path& dir, const EncoderConfig& encoder) {
    const auto path = dir / "pairs.jsonl";
    std::ifstream in(path);
    require(in.good(), ErrorKind::Io, fmt::format("cannot open '{}'", path.string()));

    EncoderConfig file_cfg = encoder;
    file_cfg.mode = EncoderMode::PretrainedAdapter;
    const FeatureFileImageEncoder from_file(file_cfg);
    const SyntheticImageEncoder synthetic(encoder);

    std::vector<Example> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json j;
        Example ex;
        std::string features;
        try {
            j = nlohmann::json::parse(line);
            ex.id = j.at("id").get<std::string>();
            ex.caption = j.at("caption").get<std::string>();
            if (j.contains("features")) features = j.at("features").get<std::string>();
        } catch (const nlohmann::json::exception& e) {
            fail(ErrorKind::Decode, fmt::format("{}:{}: {}", path.string(), line_no, e.what()));
        }
        if (features.empty()) {
            ex.patches = synthetic.encode(std::as_bytes(std::span(ex.id.data(), ex.id.size())));
        } else {
            ex.patches = from_file.encode(read_file_bytes(dir / features));
        }
        out.push_back(std::move(ex));
    }
    require(!out.empty(), ErrorKind::Input, fmt::format("dataset '{}' is empty", path.string()));
    return out;
}

Vocabulary build_vocabulary(const std::vector<Example>& data, const EmbeddingIndex* index, std::size_t max_size) {
    const PromptTemplate tmpl;
    std::vector<std::string> corpus{tmpl.prefix, tmpl.separator, tmpl.suffix};
    for (const auto& ex : data) corpus.push_back(ex.caption);
    if (index != nullptr) {
        for (const auto& e : index->entries()) corpus.push_back(e.text);
    }
    return Vocabulary::build(corpus, max_size);
}

std::vector<PreparedExample> prepare_dataset(const CaptionModel& model, const std::vector<Example>& data,
                                             const EmbeddingIndex* index) {
    const auto text_encoder = make_text_encoder(model.config.encoder);
    std::vector<PreparedExample> out;
    out.reserve(data.size());
    for (const auto& ex : data) out.push_back(prepare_example(model, *text_encoder, index, ex.id, ex.patches, ex.caption));
    return out;
}

TrainResult train(const TrainConfig& cfg, CaptionModel model, const std::vector<PreparedExample>& data) {
    cfg.validate();
    require(!data.empty(), ErrorKind::Input, "train: empty dataset");

    model.params.freeze_all();
    model.params.set_trainable_prefix("vip.", true);
    model.params.set_trainable_prefix("xattn.", true);
    model.params.zero_grad();

    TrainResult result{std::move(model), {}, {}, 0};
    CaptionModel& m = result.model;
    Adam optimizer(cfg.learning_rate);
    const Rng root(cfg.seed);
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng shuffle = root.split("shuffle").split(static_cast<std::uint64_t>(epoch));
        std::shuffle(order.begin(), order.end(), shuffle.engine());

        double epoch_total = 0.0;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            const double weight = 1.0 / static_cast<double>(stop - start);
            const Rng step_rng = root.split("step").split(result.steps);
            double batch_total = 0.0;
            for (std::size_t i = start; i < stop; ++i) {
                const PreparedExample& ex = data[order[i]];
                const ag::Var loss = example_loss(m, ex, step_rng.split(static_cast<std::uint64_t>(i - start)));
                check_finite_loss(loss.value()(0, 0), result.steps, ex.id);
                ag::backward(loss, weight);
                batch_total += loss.value()(0, 0);
            }
            optimizer.step(m.params);
            m.params.zero_grad();
            result.loss_history.push_back(batch_total * weight);
            epoch_total += batch_total;
            ++result.steps;
        }
        result.epoch_loss.push_back(epoch_total / static_cast<double>(data.size()));
        if (cfg.stop_loss > 0.0 && result.epoch_loss.back() < cfg.stop_loss) break;
    }
    return result;
}

std::vector<double> pretrain_decoder(CaptionModel& model, const std::vector<PreparedExample>& data, int epochs,
                                     double lr, std::uint64_t seed) {
    require(!data.empty(), ErrorKind::Input, "pretrain_decoder: empty dataset");
    const auto previously_trainable = trainable_names(model.params);
    model.params.freeze_all();
    model.params.set_trainable_prefix("decoder.", true);
    model.params.zero_grad();

    const ModelConfig& cfg = model.config;
    Adam optimizer(lr);
    const Rng root(seed);
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::vector<double> history;
    for (int epoch = 0; epoch < epochs; ++epoch) {
        Rng shuffle = root.split("lm-shuffle").split(static_cast<std::uint64_t>(epoch));
        std::shuffle(order.begin(), order.end(), shuffle.engine());
        double total = 0.0;
        for (std::size_t i : order) {
            CaptionSequence seq = data[i].sequence;
            seq.prefix_len = 1;
            const auto inputs = seq.inputs();
            const ag::Var loss =
                caption_loss(forward_with_prompt(model.params, cfg.decoder, cfg.adapter, inputs, ag::Var{}), seq);
            check_finite_loss(loss.value()(0, 0), static_cast<std::uint64_t>(epoch), data[i].id);
            ag::backward(loss);
            optimizer.step(model.params);
            model.params.zero_grad();
            total += loss.value()(0, 0);
        }
        history.push_back(total / static_cast<double>(data.size()));
    }
    restore_trainable(model.params, previously_trainable);
    return history;
}

double evaluate_loss(const CaptionModel& model, const std::vector<PreparedExample>& data, std::uint64_t seed) {
    require(!data.empty(), ErrorKind::Input, "evaluate_loss: empty dataset");
    ag::NoGradGuard guard;
    double total = 0.0;
    for (const auto& ex : data) total += example_loss(model, ex, Rng(seed).split("inference")).value()(0, 0);
    return total / static_cast<double>(data.size());
}

TrainResult run_training(const TrainConfig& cfg, const std::vector<Example>& data, const EmbeddingIndex* index) {
    cfg.validate();
    require(!data.empty(), ErrorKind::Input, "train: empty dataset");
    const ModelConfig mc = cfg.model_config();
    Vocabulary vocab = build_vocabulary(data, index, static_cast<std::size_t>(mc.decoder.vocab_size));
    CaptionModel model = CaptionModel::create(mc, std::move(vocab), cfg.seed);
    const auto prepared = prepare_dataset(model, data, index);
    if (cfg.decoder_pretrain_epochs > 0) {
        pretrain_decoder(model, prepared, cfg.decoder_pretrain_epochs, cfg.decoder_pretrain_lr,
                         Rng(cfg.seed).split("decoder").seed());
    }
    return train(cfg, std::move(model), prepared);
}

AblationAxis parse_ablation_axis(std::string_view name) {
    for (auto a : {AblationAxis::Components, AblationAxis::Ffn, AblationAxis::M, AblationAxis::Noise}) {
        if (to_string(a) == name) return a;
    }
    fail(ErrorKind::Input, fmt::format("unknown ablation axis '{}' (components|ffn|M|noise)", name));
}

std::string_view to_string(AblationAxis axis) noexcept {
    switch (axis) {
        case AblationAxis::Components: return "components";
        case AblationAxis::Ffn: return "ffn";
        case AblationAxis::M: return "M";
        case AblationAxis::Noise: return "noise";
    }
    return "components";
}

std::vector<TrainConfig> ablate(const TrainConfig& base, AblationAxis axis) {
    std::vector<TrainConfig> out;
    switch (axis) {
        case AblationAxis::Components: {
            struct Row {
                bool pr, omega, alpha;
            };
            for (Row r : {Row{false, true, false}, Row{false, true, true}, Row{true, false, false},
                          Row{true, true, false}, Row{true, true, true}}) {
                TrainConfig c = base;
                c.noise_variant = NoiseVariant::LearnableScaled;
                c.use_patch_retrieval = r.pr;
                c.use_omega = r.omega;
                c.use_alpha = r.alpha;
                c.name = fmt::format("components/pr{}_omega{}_alpha{}", int(r.pr), int(r.omega), int(r.alpha));
                out.push_back(std::move(c));
            }
            break;
        }
        case AblationAxis::Ffn:
            for (auto v : {FusionVariant::Sum, FusionVariant::Concat, FusionVariant::MlpSum, FusionVariant::MlpConcat,
                           FusionVariant::Attention}) {
                TrainConfig c = base;
                c.ffn_variant = v;
                c.name = fmt::format("ffn/{}", to_string(v));
                out.push_back(std::move(c));
            }
            break;
        case AblationAxis::M:
            for (int m : {100, 150, 200, 250, 300, 400, 500}) {
                TrainConfig c = base;
                c.M = m;
                c.name = fmt::format("M/{}", m);
                out.push_back(std::move(c));
            }
            break;
        case AblationAxis::Noise:
            for (auto v : {NoiseVariant::None, NoiseVariant::Gauss, NoiseVariant::UnifSym, NoiseVariant::UnifGauss,
                           NoiseVariant::LearnableScaled}) {
                TrainConfig c = base;
                c.noise_variant = v;
                c.use_omega = true;
                c.use_alpha = true;
                c.name = fmt::format("noise/{}", to_string(v));
                out.push_back(std::move(c));
            }
            break;
    }
    return out;
}

}  // namespace vipcap
