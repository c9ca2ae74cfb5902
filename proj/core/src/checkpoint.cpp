#include "vipcap/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include <fmt/format.h>

#include "vipcap/error.hpp"
#include "vipcap/features_io.hpp"

namespace vipcap {
namespace {

constexpr char kMagic[8] = {'V', 'I', 'P', 'C', 'K', 'P', 'T', '\0'};
constexpr std::size_t kHeaderSize = 8 + 4 + 8;

}  // namespace

Checkpoint make_checkpoint(const TrainConfig& cfg, const CaptionModel& model, std::uint64_t step) {
    Checkpoint ckpt;
    ckpt.config = cfg;
    ckpt.vocab = model.vocab.tokens();
    ckpt.step = step;
    ckpt.rng = {cfg.seed, step};
    for (const auto& [name, var] : model.params) {
        CheckpointTensor t;
        t.name = name;
        t.rows = var.rows();
        t.cols = var.cols();
        t.trainable = var.requires_grad();
        t.data.resize(static_cast<std::size_t>(var.value().size()));
        for (Eigen::Index i = 0; i < var.value().size(); ++i) {
            t.data[static_cast<std::size_t>(i)] = static_cast<float>(var.value().data()[i]);
        }
        ckpt.tensors.push_back(std::move(t));
    }
    return ckpt;
}

CaptionModel model_from_checkpoint(const Checkpoint& ckpt) {
    const ModelConfig cfg = ckpt.config.model_config();
    CaptionModel model{cfg, Vocabulary(ckpt.vocab), {}};
    const ParameterLayout layout = model_layout(cfg);
    require(layout.size() == ckpt.tensors.size(), ErrorKind::Decode,
            fmt::format("checkpoint holds {} tensors, config expects {}", ckpt.tensors.size(), layout.size()));
    for (const auto& t : ckpt.tensors) {
        Matrix value(t.rows, t.cols);
        for (Eigen::Index i = 0; i < value.size(); ++i) value.data()[i] = t.data[static_cast<std::size_t>(i)];
        model.params.add(t.name, std::move(value), t.trainable);
    }
    for (const auto& spec : layout) {
        require(model.params.contains(spec.name), ErrorKind::Decode,
                fmt::format("checkpoint is missing tensor '{}'", spec.name));
        const auto& v = model.params.get(spec.name);
        require(v.rows() == spec.rows && v.cols() == spec.cols, ErrorKind::Decode,
                fmt::format("tensor '{}' has shape {}x{}, expected {}x{}", spec.name, v.rows(), v.cols(), spec.rows,
                            spec.cols));
    }
    return model;
}

std::vector<std::byte> serialize_checkpoint(const Checkpoint& ckpt) {
    nlohmann::json tensors = nlohmann::json::array();
    std::size_t offset = 0;
    for (const auto& t : ckpt.tensors) {
        tensors.push_back({{"name", t.name},
                           {"shape", {t.rows, t.cols}},
                           {"offset", offset},
                           {"trainable", t.trainable}});
        offset += t.data.size() * sizeof(float);
    }
    const nlohmann::json manifest = {
        {"format", "vipcap-checkpoint"},
        {"version", kCheckpointVersion},
        {"step", ckpt.step},
        {"rng", {{"seed", ckpt.rng.seed}, {"step", ckpt.rng.step}}},
        {"config", to_json(ckpt.config)},
        {"vocab", ckpt.vocab},
        {"tensors", tensors},
    };
    const std::string text = manifest.dump();

    std::vector<std::byte> out;
    out.reserve(kHeaderSize + text.size() + offset);
    for (char c : kMagic) out.push_back(static_cast<std::byte>(c));
    put_u32(out, kCheckpointVersion);
    put_u64(out, text.size());
    for (char c : text) out.push_back(static_cast<std::byte>(c));
    for (const auto& t : ckpt.tensors) {
        for (float v : t.data) put_f32(out, v);
    }
    return out;
}

Checkpoint deserialize_checkpoint(std::span<const std::byte> bytes) {
    require(bytes.size() >= kHeaderSize, ErrorKind::Decode, "checkpoint: truncated header");
    require(std::memcmp(bytes.data(), kMagic, sizeof kMagic) == 0, ErrorKind::Decode, "checkpoint: bad magic");
    const std::uint32_t version = get_u32(bytes, 8);
    require(version == kCheckpointVersion, ErrorKind::Decode,
            fmt::format("checkpoint: unsupported version {}", version));
    const std::uint64_t manifest_len = get_u64(bytes, 12);
    require(manifest_len <= bytes.size() - kHeaderSize, ErrorKind::Decode, "checkpoint: truncated manifest");
    const auto* text = reinterpret_cast<const char*>(bytes.data() + kHeaderSize);
    const std::size_t blob_start = kHeaderSize + manifest_len;
    const std::size_t blob_size = bytes.size() - blob_start;

    Checkpoint ckpt;
    try {
        const auto manifest = nlohmann::json::parse(text, text + manifest_len);
        ckpt.step = manifest.at("step").get<std::uint64_t>();
        ckpt.rng.seed = manifest.at("rng").at("seed").get<std::uint64_t>();
        ckpt.rng.step = manifest.at("rng").at("step").get<std::uint64_t>();
        ckpt.config = train_config_from_json(manifest.at("config"));
        ckpt.vocab = manifest.at("vocab").get<std::vector<std::string>>();
        for (const auto& jt : manifest.at("tensors")) {
            CheckpointTensor t;
            t.name = jt.at("name").get<std::string>();
            t.rows = jt.at("shape").at(0).get<std::int64_t>();
            t.cols = jt.at("shape").at(1).get<std::int64_t>();
            t.trainable = jt.at("trainable").get<bool>();
            const auto offset = jt.at("offset").get<std::size_t>();
            require(t.rows >= 0 && t.cols >= 0, ErrorKind::Decode, "checkpoint: negative shape");
            const auto count = static_cast<std::size_t>(t.rows * t.cols);
            require(offset % sizeof(float) == 0 && offset <= blob_size &&
                        count <= (blob_size - offset) / sizeof(float),
                    ErrorKind::Decode, fmt::format("checkpoint: tensor '{}' lies outside the blob", t.name));
            t.data.resize(count);
            for (std::size_t i = 0; i < count; ++i) t.data[i] = get_f32(bytes, blob_start + offset + i * sizeof(float));
            ckpt.tensors.push_back(std::move(t));
        }
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::Decode, fmt::format("checkpoint manifest: {}", e.what()));
    }
    return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    const auto bytes = serialize_checkpoint(ckpt);
    std::ofstream out(path, std::ios::binary);
    require(out.good(), ErrorKind::Io, fmt::format("cannot write '{}'", path.string()));
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    require(out.good(), ErrorKind::Io, fmt::format("write to '{}' failed", path.string()));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return deserialize_checkpoint(read_file_bytes(path)); }

bool same_contents(const Checkpoint& a, const Checkpoint& b) {
    if (a.step != b.step || !(a.rng == b.rng) || a.vocab != b.vocab) return false;
    if (to_json(a.config) != to_json(b.config) || a.tensors.size() != b.tensors.size()) return false;
    for (std::size_t i = 0; i < a.tensors.size(); ++i) {
        const auto& x = a.tensors[i];
        const auto& y = b.tensors[i];
        if (x.name != y.name || x.rows != y.rows || x.cols != y.cols || x.trainable != y.trainable) return false;
        if (x.data.size() != y.data.size()) return false;
        if (std::memcmp(x.data.data(), y.data.data(), x.data.size() * sizeof(float)) != 0) return false;
    }
    return true;
}

}  // namespace vipcap
