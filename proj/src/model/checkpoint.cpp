#include "selfaug/model/checkpoint.hpp"

#include "selfaug/errors.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fmt/format.h>
#include <fstream>
#include <sstream>

namespace selfaug {
namespace {

constexpr char kMagic[8] = {'S', 'A', 'U', 'G', 'C', 'K', 'P', 'T'};

template <typename T>
void put(std::string& out, T value) {
    static_assert(std::is_trivially_copyable_v<T>);
    char buf[sizeof(T)];
    std::memcpy(buf, &value, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
    out.append(buf, sizeof(T));
}

class Reader {
public:
    explicit Reader(std::string_view bytes) : bytes_(bytes) {}

    template <typename T>
    T get() {
        char buf[sizeof(T)];
        std::memcpy(buf, take(sizeof(T)).data(), sizeof(T));
        if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
        T value;
        std::memcpy(&value, buf, sizeof(T));
        return value;
    }

    std::string_view take(std::size_t n) {
        if (n > bytes_.size() - pos_) throw ParseError("checkpoint: truncated file");
        auto out = bytes_.substr(pos_, n);
        pos_ += n;
        return out;
    }

    bool done() const { return pos_ == bytes_.size(); }

private:
    std::string_view bytes_;
    std::size_t pos_ = 0;
};

} // namespace

std::string Checkpoint::serialize() const {
    std::string out(kMagic, sizeof(kMagic));
    put<std::uint32_t>(out, kVersion);
    const std::string meta_text = meta.dump();
    put<std::uint64_t>(out, meta_text.size());
    out += meta_text;
    put<std::uint64_t>(out, arrays.size());
    for (const auto& a : arrays) {
        put<std::uint32_t>(out, static_cast<std::uint32_t>(a.name.size()));
        out += a.name;
        put<std::uint32_t>(out, static_cast<std::uint32_t>(a.value.rank()));
        for (auto d : a.value.shape()) put<std::uint64_t>(out, d);
        for (double v : a.value.values()) put<double>(out, v);
    }
    return out;
}

Checkpoint Checkpoint::deserialize(std::string_view bytes) {
    Reader r(bytes);
    if (r.take(sizeof(kMagic)) != std::string_view(kMagic, sizeof(kMagic))) {
        throw ParseError("checkpoint: bad magic");
    }
    const auto version = r.get<std::uint32_t>();
    if (version != kVersion) throw ParseError(fmt::format("checkpoint: unsupported version {}", version));
    Checkpoint c;
    const auto meta_len = r.get<std::uint64_t>();
    try {
        c.meta = nlohmann::json::parse(r.take(meta_len));
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(fmt::format("checkpoint metadata: {}", e.what()));
    }
    const auto n = r.get<std::uint64_t>();
    for (std::uint64_t i = 0; i < n; ++i) {
        Array a;
        a.name = std::string(r.take(r.get<std::uint32_t>()));
        Shape shape(r.get<std::uint32_t>());
        for (auto& d : shape) d = r.get<std::uint64_t>();
        std::vector<double> data(shape_size(shape));
        for (auto& v : data) v = r.get<double>();
        a.value = Tensor(std::move(shape), std::move(data));
        c.arrays.push_back(std::move(a));
    }
    if (!r.done()) throw ParseError("checkpoint: trailing bytes");
    return c;
}

void Checkpoint::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error(fmt::format("cannot write checkpoint {}", path.string()));
    const std::string bytes = serialize();
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError(fmt::format("cannot open checkpoint {}", path.string()));
    std::ostringstream buf;
    buf << in.rdbuf();
    return deserialize(buf.str());
}

void Checkpoint::add_params(std::string_view prefix, const ParamStore& params) {
    for (const auto& p : params) arrays.push_back({std::string(prefix) + p.name, p.value});
}

ParamStore Checkpoint::params_with_prefix(std::string_view prefix) const {
    ParamStore out;
    for (const auto& a : arrays) {
        if (a.name.starts_with(prefix)) out.add(a.name.substr(prefix.size()), a.value);
    }
    return out;
}

bool Checkpoint::has_prefix(std::string_view prefix) const {
    for (const auto& a : arrays) {
        if (a.name.starts_with(prefix)) return true;
    }
    return false;
}

Checkpoint model_checkpoint(const EncoderModel& model) {
    Checkpoint c;
    c.meta["kind"] = "encoder";
    c.meta["model_config"] = model.config().to_json();
    c.add_params("model.", model.params());
    return c;
}

EncoderModel model_from_checkpoint(const Checkpoint& ckpt, std::string_view prefix, std::string_view config_key) {
    const std::string key(config_key);
    if (!ckpt.meta.contains(key)) {
        throw ConfigError(fmt::format("checkpoint has no '{}' entry", config_key));
    }
    return EncoderModel(ModelConfig::from_json(ckpt.meta.at(key)), ckpt.params_with_prefix(prefix));
}

} // namespace selfaug
