#pragma once

// Model checkpoints: a directory holding the flat parameter vector, the
// optimizer moments (so training can resume), and a JSON sidecar with the
// training metadata. The parameter hash stored at save time is re-verified on
// load to catch corrupted or mismatched files.

#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>

#include "json.hpp"

#include "hspace/core/version.hpp"
#include "hspace/diffusion/model.hpp"
#include "hspace/diffusion/train.hpp"
#include "hspace/io/tensor_file.hpp"

namespace hspace::io {

struct Checkpoint {
    DenoiserModel model;
    TrainState state;
};

inline void write_json_file(const std::string& path, const nlohmann::json& j) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    os << j.dump(2) << "\n";
    if (!os) throw std::runtime_error("write failed: " + path);
}

inline nlohmann::json read_json_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open: " + path);
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("malformed JSON in " + path + ": " + e.what());
    }
    return j;
}

inline void save_checkpoint(const std::string& dir, const DenoiserModel& model,
                            const TrainState& state) {
    std::filesystem::create_directories(dir);
    write_vector(dir + "/params.ntsr", model.params().flatten());
    TrainState s = state;
    if (s.empty()) {
        s.adam_m = Vector::Zero(model.param_count());
        s.adam_v = Vector::Zero(model.param_count());
    }
    write_vector(dir + "/adam_m.ntsr", s.adam_m);
    write_vector(dir + "/adam_v.ntsr", s.adam_v);

    nlohmann::json meta;
    meta["format_version"] = 1;
    meta["toolkit_version"] = kToolkitVersion;
    meta["param_count"] = model.param_count();
    meta["param_hash"] = model.param_hash_hex();
    meta["adam_t"] = s.adam_t;
    meta["steps_done"] = s.steps_done;
    meta["training"] = {
        {"dataset_hash", model.meta.dataset_hash},
        {"seed", model.meta.seed},
        {"steps", model.meta.steps},
        {"final_train_loss", model.meta.final_train_loss},
        {"holdout_loss", model.meta.holdout_loss},
        {"loss_curve", model.meta.loss_curve},
    };
    write_json_file(dir + "/meta.json", meta);
}

inline Checkpoint load_checkpoint(const std::string& dir) {
    const nlohmann::json meta = read_json_file(dir + "/meta.json");
    if (meta.value("format_version", 0) != 1)
        throw std::runtime_error("unsupported checkpoint format in " + dir);

    Checkpoint ck;
    Vector flat = read_vector(dir + "/params.ntsr");
    if (flat.size() != ck.model.param_count())
        throw std::runtime_error("checkpoint parameter count mismatch in " + dir);
    ck.model.params().unflatten(flat);
    const std::string expect = meta.at("param_hash").get<std::string>();
    if (ck.model.param_hash_hex() != expect)
        throw std::runtime_error("checkpoint parameter hash mismatch in " + dir);

    ck.state.adam_m = read_vector(dir + "/adam_m.ntsr");
    ck.state.adam_v = read_vector(dir + "/adam_v.ntsr");
    ck.state.adam_t = meta.at("adam_t").get<long>();
    ck.state.steps_done = meta.at("steps_done").get<int>();

    const auto& tr = meta.at("training");
    ck.model.meta.dataset_hash = tr.at("dataset_hash").get<std::string>();
    ck.model.meta.seed = tr.at("seed").get<std::uint64_t>();
    ck.model.meta.steps = tr.at("steps").get<int>();
    ck.model.meta.final_train_loss = tr.at("final_train_loss").get<double>();
    ck.model.meta.holdout_loss = tr.at("holdout_loss").get<double>();
    ck.model.meta.loss_curve = tr.at("loss_curve").get<std::vector<double>>();
    return ck;
}

}  // namespace hspace::io
