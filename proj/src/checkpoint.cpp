#include "selm/error.hpp"
#include "selm/tinylm.hpp"

namespace selm {

namespace {
constexpr std::string_view kMagic = "SLMW";
constexpr std::uint8_t kVersion = 1;
} // namespace

Bytes serialize_checkpoint(const ModelParams& params) {
    params.config.validate();
    if (params.flat.size() != params.config.param_count())
        throw DimensionError("parameter vector does not match the model config");
    ByteWriter w;
    w.raw(kMagic);
    w.u8(kVersion);
    const auto& c = params.config;
    for (std::uint32_t v : {c.vocab_size, c.context_len, c.n_layers, c.n_heads, c.d_model, c.d_ff}) w.u32(v);
    for (float x : params.flat) w.f32(x);
    return std::move(w).bytes();
}

ModelParams deserialize_checkpoint(std::span<const std::uint8_t> data) {
    ByteReader r(data);
    if (to_string(r.raw(4)) != kMagic) throw FormatError("not a model checkpoint (bad magic)");
    if (const auto v = r.u8(); v != kVersion)
        throw FormatError("unsupported checkpoint version " + std::to_string(v));
    ModelParams p;
    p.config.vocab_size = r.u32();
    p.config.context_len = r.u32();
    p.config.n_layers = r.u32();
    p.config.n_heads = r.u32();
    p.config.d_model = r.u32();
    p.config.d_ff = r.u32();
    try {
        p.config.validate();
    } catch (const ConfigError& e) {
        throw FormatError(std::string("checkpoint config invalid: ") + e.what());
    }
    const std::size_t n = p.config.param_count();
    if (r.remaining() != 4 * n) throw FormatError("checkpoint payload length does not match its config");
    p.flat.resize(n);
    for (auto& x : p.flat) x = r.f32();
    return p;
}

Digest model_id(std::span<const std::uint8_t> checkpoint_bytes) { return sha256(checkpoint_bytes); }

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
    const Bytes raw = read_file(path);
    return Checkpoint{deserialize_checkpoint(raw), model_id(raw)};
}

Checkpoint Checkpoint::from_params(ModelParams params) {
    const Bytes raw = serialize_checkpoint(params);
    return Checkpoint{std::move(params), model_id(raw)};
}

} // namespace selm
