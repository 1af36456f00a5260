#pragma once

#include "selfaug/model/encoder.hpp"
#include "selfaug/tensor/graph.hpp"

#include "json.hpp"

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace selfaug {

// Versioned binary container: JSON metadata plus named float64 arrays.
//
//   bytes 0-7   magic "SAUGCKPT"
//   u32         format version (1)
//   u64, bytes  metadata length, compact JSON with sorted keys
//   u64         array count
//   per array:  u32 name length, name bytes, u32 rank, u64 dims[rank],
//               float64 values (row-major)
//
// All integers and floats are little-endian. Serialization is a pure function of
// the contents, so save -> load -> save reproduces the same bytes.
struct Checkpoint {
    static constexpr std::uint32_t kVersion = 1;

    struct Array {
        std::string name;
        Tensor value;
    };

    nlohmann::json meta = nlohmann::json::object();
    std::vector<Array> arrays;

    std::string serialize() const;
    static Checkpoint deserialize(std::string_view bytes);

    void save(const std::filesystem::path& path) const;
    static Checkpoint load(const std::filesystem::path& path);

    // Stores every parameter as "<prefix><name>".
    void add_params(std::string_view prefix, const ParamStore& params);
    // Parameters stored under `prefix`, in stored order, with the prefix removed.
    ParamStore params_with_prefix(std::string_view prefix) const;
    bool has_prefix(std::string_view prefix) const;
};

// Model-only checkpoint: meta {"kind": "encoder", "model_config": ...}, arrays "model.*".
Checkpoint model_checkpoint(const EncoderModel& model);
EncoderModel model_from_checkpoint(const Checkpoint& ckpt, std::string_view prefix = "model.",
                                   std::string_view config_key = "model_config");

} // namespace selfaug
