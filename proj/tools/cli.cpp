#include "vipcap/cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <memory>
#include <optional>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <spdlog/sinks/ostream_sink.h>
#include <spdlog/spdlog.h>

#include "vipcap/checkpoint.hpp"
#include "vipcap/datastore.hpp"
#include "vipcap/error.hpp"
#include "vipcap/features_io.hpp"
#include "vipcap/metrics.hpp"
#include "vipcap/model.hpp"
#include "vipcap/synthetic.hpp"
#include "vipcap/training.hpp"

namespace vipcap::cli {
namespace {

std::shared_ptr<spdlog::logger> make_logger(std::ostream& err) {
    auto sink = std::make_shared<spdlog::sinks::ostream_sink_mt>(err);
    auto logger = std::make_shared<spdlog::logger>("vipcap", sink);
    logger->set_pattern("[%Y-%m-%d %H:%M:%S.%e] [%l] %v");
    spdlog::level::level_enum level = spdlog::level::info;
    if (const char* env = std::getenv("VIPCAP_LOG"); env != nullptr && *env != '\0') {
        level = spdlog::level::from_str(env);
    }
    logger->set_level(level);
    return logger;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    require(out.good(), ErrorKind::Io, fmt::format("cannot write '{}'", path.string()));
    out << text;
}

std::string file_stem_for(std::string_view name) {
    std::string s(name);
    std::replace_if(s.begin(), s.end(), [](char c) { return !std::isalnum(static_cast<unsigned char>(c)); }, '_');
    return s;
}

struct BuildDatastoreArgs {
    std::string captions, embeddings, out;
};

struct TrainArgs {
    std::string config, data, datastore, out;
    std::optional<std::uint64_t> seed;
};

struct GenerateArgs {
    std::string features, datastore, checkpoint;
    int beam = 0;
    int max_len = 32;
    std::uint64_t seed = 0;
};

struct EvalArgs {
    std::string pred, refs;
};

struct AblateArgs {
    std::string axis, config, out;
    std::optional<std::uint64_t> seed;
};

struct SynthArgs {
    std::string out;
    int count = 50;
    std::uint64_t seed = 0;
    int image_dim = 32;
    int num_patches = 4;
};

TrainConfig base_config(const std::string& path, const std::optional<std::uint64_t>& seed) {
    TrainConfig cfg = path.empty() ? TrainConfig{} : load_train_config(path);
    if (seed) cfg.seed = *seed;
    cfg.validate();
    return cfg;
}

int run_build_datastore(const BuildDatastoreArgs& a, std::ostream& out, spdlog::logger& log) {
    log.info("build-datastore captions={} embeddings={} out={}", a.captions, a.embeddings, a.out);
    auto entries = load_caption_entries(a.captions, a.embeddings);
    const EmbeddingIndex index = build_index(entries);
    std::filesystem::create_directories(a.out);
    save_datastore(a.out, entries);
    out << nlohmann::json{{"entries", index.size()}, {"dim", index.dim()}, {"out", a.out}}.dump() << '\n';
    return kSuccess;
}

int run_train(const TrainArgs& a, std::ostream& out, spdlog::logger& log) {
    const TrainConfig cfg = base_config(a.config, a.seed);
    log.info("train config={} seed={}", to_json(cfg).dump(), cfg.seed);
    const ModelConfig mc = cfg.model_config();
    const auto data = load_dataset(a.data, mc.encoder);
    const EmbeddingIndex index = load_datastore(a.datastore);
    log.info("loaded {} examples, datastore of {} captions", data.size(), index.size());

    const TrainResult result = run_training(cfg, data, &index);
    std::filesystem::create_directories(a.out);
    const auto ckpt_path = std::filesystem::path(a.out) / "checkpoint.vipckpt";
    save_checkpoint(ckpt_path, make_checkpoint(cfg, result.model, result.steps));
    const nlohmann::json history{{"steps", result.steps},
                                 {"loss", result.loss_history},
                                 {"epoch_loss", result.epoch_loss}};
    write_text(std::filesystem::path(a.out) / "loss_history.json", history.dump(2) + "\n");
    write_text(std::filesystem::path(a.out) / "config.json", to_json(cfg).dump(2) + "\n");
    log.info("trained {} steps, final epoch loss {}", result.steps,
             result.epoch_loss.empty() ? 0.0 : result.epoch_loss.back());
    out << nlohmann::json{{"checkpoint", ckpt_path.string()},
                          {"steps", result.steps},
                          {"final_loss", result.epoch_loss.empty() ? 0.0 : result.epoch_loss.back()}}
               .dump()
        << '\n';
    return kSuccess;
}

int run_generate(const GenerateArgs& a, std::ostream& out, spdlog::logger& log) {
    const Checkpoint ckpt = load_checkpoint(a.checkpoint);
    const CaptionModel model = model_from_checkpoint(ckpt);
    log.info("generate config={} seed={} beam={}", to_json(ckpt.config).dump(), a.seed, a.beam);
    EncoderConfig enc = model.config.encoder;
    enc.mode = EncoderMode::PretrainedAdapter;
    const PatchFeatures patches = FeatureFileImageEncoder(enc).encode(read_file_bytes(a.features));
    const EmbeddingIndex index = load_datastore(a.datastore);
    const std::string prompt = retrieval_prompt(&index, mean_patch(patches), model.config.retrieval.k, "",
                                                static_cast<std::size_t>(model.config.encoder.max_text_tokens));
    const TextFeature text = make_text_encoder(model.config.encoder)->encode(prompt);
    const DecodeStrategy strategy = a.beam > 0 ? DecodeStrategy::beam(a.beam) : DecodeStrategy::greedy();
    const std::string caption = generate_caption(model, text, patches, prompt, strategy, a.max_len, a.seed);
    out << nlohmann::json{{"caption", caption}, {"prompt", prompt}}.dump() << '\n';
    return kSuccess;
}

int run_eval(const EvalArgs& a, std::ostream& out, spdlog::logger& log) {
    log.info("eval pred={} refs={}", a.pred, a.refs);
    const EvalCorpus corpus = load_eval_corpus(a.pred, a.refs);
    const BleuStats bleu = bleu4_stats(corpus);
    const double cider_score = cider(corpus);
    nlohmann::json report{{"images", corpus.ids.size()},
                          {"bleu4", bleu.score},
                          {"bleu_precisions", bleu.precisions},
                          {"brevity_penalty", bleu.brevity_penalty},
                          {"cider", cider_score}};
    out << report.dump(2) << '\n';
    return kSuccess;
}

int run_ablate(const AblateArgs& a, std::ostream& out, spdlog::logger& log) {
    const AblationAxis axis = parse_ablation_axis(a.axis);
    const TrainConfig base = base_config(a.config, a.seed);
    log.info("ablate axis={} base={} seed={}", to_string(axis), to_json(base).dump(), base.seed);
    const auto grid = ablate(base, axis);
    if (!a.out.empty()) std::filesystem::create_directories(a.out);
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const std::string text = to_json(grid[i]).dump();
        out << text << '\n';
        if (!a.out.empty()) {
            const auto path = std::filesystem::path(a.out) / fmt::format("{:02d}_{}.json", i, file_stem_for(grid[i].name));
            write_text(path, to_json(grid[i]).dump(2) + "\n");
        }
    }
    return kSuccess;
}

int run_synth(const SynthArgs& a, std::ostream& out, spdlog::logger& log) {
    EncoderConfig enc;
    enc.image_dim = a.image_dim;
    enc.text_dim = a.image_dim;
    enc.num_patches = a.num_patches;
    log.info("synth-data count={} image_dim={} num_patches={} seed={}", a.count, a.image_dim, a.num_patches, a.seed);
    const SyntheticCorpus corpus = make_synthetic_corpus(a.count, enc, a.seed);
    save_synthetic_corpus(a.out, corpus);
    out << nlohmann::json{{"examples", corpus.examples.size()}, {"out", a.out}}.dump() << '\n';
    return kSuccess;
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Retrieval-text visual prompting for image captioning", "vipcap"};
    app.require_subcommand(1, 1);

    BuildDatastoreArgs bd;
    auto* build_cmd = app.add_subcommand("build-datastore", "Index captions and embeddings into a datastore");
    build_cmd->add_option("--captions", bd.captions, "captions.jsonl with {id, text}")->required();
    build_cmd->add_option("--embeddings", bd.embeddings, "VIPC embedding file, one row per caption")->required();
    build_cmd->add_option("--out", bd.out, "Output directory")->required();

    TrainArgs tr;
    std::uint64_t train_seed = 0;
    auto* train_cmd = app.add_subcommand("train", "Train the visual prompt module and adapters");
    train_cmd->add_option("--config", tr.config, "JSON training config")->required();
    train_cmd->add_option("--data", tr.data, "Directory holding pairs.jsonl")->required();
    train_cmd->add_option("--datastore", tr.datastore, "Datastore directory")->required();
    train_cmd->add_option("--out", tr.out, "Output directory")->required();
    auto* train_seed_opt = train_cmd->add_option("--seed", train_seed, "Overrides the config seed");

    GenerateArgs gen;
    auto* gen_cmd = app.add_subcommand("generate", "Caption one image");
    gen_cmd->add_option("--features", gen.features, "VIPC patch feature file")->required();
    gen_cmd->add_option("--datastore", gen.datastore, "Datastore directory")->required();
    gen_cmd->add_option("--checkpoint", gen.checkpoint, "Checkpoint file")->required();
    gen_cmd->add_option("--beam", gen.beam, "Beam width (0 = greedy)")->check(CLI::NonNegativeNumber);
    gen_cmd->add_option("--max-len", gen.max_len, "Maximum caption tokens")->check(CLI::PositiveNumber);
    gen_cmd->add_option("--seed", gen.seed, "Seed for the visual prompt sampler");

    EvalArgs ev;
    auto* eval_cmd = app.add_subcommand("eval", "Score predictions with BLEU@4 and CIDEr-D");
    eval_cmd->add_option("--pred", ev.pred, "Predictions jsonl {id, caption}")->required();
    eval_cmd->add_option("--refs", ev.refs, "References jsonl {id, caption} or {id, captions}")->required();

    AblateArgs ab;
    std::uint64_t ablate_seed = 0;
    auto* ablate_cmd = app.add_subcommand("ablate", "Print the configuration grid for an ablation axis");
    ablate_cmd->add_option("--axis", ab.axis, "components|ffn|M|noise")->required();
    ablate_cmd->add_option("--config", ab.config, "Base JSON training config");
    ablate_cmd->add_option("--out", ab.out, "Also write one config file per grid point here");
    auto* ablate_seed_opt = ablate_cmd->add_option("--seed", ablate_seed, "Overrides the config seed");

    SynthArgs sy;
    auto* synth_cmd = app.add_subcommand("synth-data", "Write a synthetic dataset and datastore");
    synth_cmd->add_option("--out", sy.out, "Output directory")->required();
    synth_cmd->add_option("--count", sy.count, "Number of examples")->check(CLI::PositiveNumber);
    synth_cmd->add_option("--image-dim", sy.image_dim, "Patch feature width")->check(CLI::PositiveNumber);
    synth_cmd->add_option("--num-patches", sy.num_patches, "Patches per image")->check(CLI::PositiveNumber);
    synth_cmd->add_option("--seed", sy.seed, "Seed");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kSuccess;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n\n" << app.help();
        return kUsage;
    }

    auto log = make_logger(err);
    try {
        if (build_cmd->parsed()) return run_build_datastore(bd, out, *log);
        if (train_cmd->parsed()) {
            if (train_seed_opt->count() > 0) tr.seed = train_seed;
            return run_train(tr, out, *log);
        }
        if (gen_cmd->parsed()) return run_generate(gen, out, *log);
        if (eval_cmd->parsed()) return run_eval(ev, out, *log);
        if (ablate_cmd->parsed()) {
            if (ablate_seed_opt->count() > 0) ab.seed = ablate_seed;
            return run_ablate(ab, out, *log);
        }
        if (synth_cmd->parsed()) return run_synth(sy, out, *log);
    } catch (const Error& e) {
        log->error("{} error: {}", to_string(e.kind()), e.what());
        return e.kind() == ErrorKind::Numeric ? kNumericError : kDataError;
    } catch (const std::exception& e) {
        log->error("{}", e.what());
        return kDataError;
    }
    err << app.help();
    return kUsage;
}

}  // namespace vipcap::cli
