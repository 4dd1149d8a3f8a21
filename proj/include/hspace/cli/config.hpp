#pragma once

// Experiment configuration: one versioned JSON file with per-command
// sections. Parsing is strict — unknown keys anywhere are rejected — and the
// whole file is validated before any compute starts. Command-line flags
// override file values; the fully resolved configuration is echoed into every
// run manifest, and a manifest can itself be passed back as the config to
// reproduce a run.

#include <array>
#include <cmath>
#include <cstdint>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "hspace/diffusion/schedule.hpp"
#include "hspace/diffusion/synth.hpp"
#include "hspace/io/checkpoint.hpp"
#include "hspace/op/region.hpp"

namespace hspace::cli {

class ConfigError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

namespace detail {

inline void reject_unknown(const nlohmann::json& obj, const std::string& section,
                           const std::set<std::string>& allowed) {
    if (!obj.is_object())
        throw ConfigError("configuration section '" + section + "' must be a JSON object");
    for (auto it = obj.begin(); it != obj.end(); ++it)
        if (!allowed.count(it.key()))
            throw ConfigError("unknown configuration key '" + it.key() + "' in section '" +
                              section + "'");
}

template <typename T>
T get_or(const nlohmann::json& obj, const std::string& key, T fallback) {
    if (!obj.contains(key)) return fallback;
    try {
        return obj.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ConfigError("configuration key '" + key + "' has the wrong type");
    }
}

}  // namespace detail

struct ScheduleSection {
    int timesteps = 100;
    double beta_start = 1e-4;
    double beta_end = 2e-2;
    double eta = 0.0;
};

struct DataSection {
    int count = 256;
    int image_size = 32;
};

struct TrainSection {
    int steps = 1200;
    int batch_size = 16;
    double learning_rate = 2e-3;
    double holdout_fraction = 0.1;
    double loss_threshold = 0.15;
    int log_every = 25;
    std::string dataset;  // dataset directory
    std::string resume;   // checkpoint directory to continue from
};

struct RegionSpec {
    std::string name;
    bool is_rest = false;            // complement of the other regions
    bool has_rect = false;
    std::array<int, 4> rect{};       // x0, y0, x1, y1 (half-open)
    std::string pgm;                 // mask image path (nonzero = in region)
};

struct DiscoverySection {
    std::string checkpoint;
    std::string dataset;
    int image_index = 0;
    double timestep_frac = 0.6;
    int rank = 16;
    int joint_rank = 8;
    int individual_rank = 3;
    bool no_jive = false;
    bool allow_partial = false;
    std::vector<RegionSpec> regions;  // empty -> built-in face regions
};

struct EditSection {
    std::string checkpoint;
    std::string dataset;
    std::string archive;
    std::vector<std::string> directions;  // "joint:K" or "individual:REGION:K"
    std::vector<double> strengths;
    double window_hi = 1.0;  // fractions of T
    double window_lo = 0.0;
    std::vector<int> images;  // dataset indices to edit
    bool grid = false;        // also render the strength × cumulative-prefix grid
};

struct EvalSection {
    std::string checkpoint;
    std::string dataset;
    std::vector<std::string> archives;
    std::vector<int> images;  // empty -> first image_count images
    int image_count = 20;
    double strength = 3.0;
    double window_hi = 1.0;
    double window_lo = 0.0;
};

struct ExperimentConfig {
    int version = 1;
    std::uint64_t seed = 7;
    std::string out;
    ScheduleSection schedule;
    DataSection data;
    TrainSection train;
    DiscoverySection discovery;
    EditSection edit;
    EvalSection eval;

    static ExperimentConfig from_json(const nlohmann::json& j);
    static ExperimentConfig load(const std::string& path) {
        nlohmann::json j = io::read_json_file(path);
        // A run manifest embeds the resolved config; accept it directly so a
        // manifest reproduces its run.
        if (j.contains("manifest_version") && j.contains("config")) j = j.at("config");
        return from_json(j);
    }

    nlohmann::json to_json() const;
    void validate() const;

    NoiseSchedule make_schedule() const {
        return NoiseSchedule::linear_beta(schedule.timesteps, schedule.beta_start,
                                          schedule.beta_end, schedule.eta);
    }

    int analysis_timestep() const {
        const int t = static_cast<int>(std::lround(discovery.timestep_frac * schedule.timesteps));
        return std::min(std::max(t, 1), schedule.timesteps);
    }

    // Timestep window for edits, resolved from fractions of T.
    std::pair<int, int> edit_window(double hi_frac, double lo_frac) const {
        const int hi = static_cast<int>(std::lround(hi_frac * schedule.timesteps));
        const int lo = static_cast<int>(std::lround(lo_frac * schedule.timesteps));
        return {std::min(std::max(hi, 0), schedule.timesteps),
                std::min(std::max(lo, 0), schedule.timesteps)};
    }

    RegionSet make_regions(int image_size, int channels = 1) const {
        if (discovery.regions.empty()) return default_face_regions(image_size, channels);
        std::vector<RegionMask> masks;
        std::vector<const RegionSpec*> rests;
        for (const auto& spec : discovery.regions) {
            if (spec.is_rest) {
                rests.push_back(&spec);
                continue;
            }
            if (spec.has_rect)
                masks.push_back(RegionMask::from_rect(spec.name, image_size, image_size,
                                                      channels, spec.rect[0], spec.rect[1],
                                                      spec.rect[2], spec.rect[3]));
            else
                masks.push_back(RegionMask::from_pgm(spec.name, spec.pgm, channels));
        }
        if (rests.size() > 1) throw ConfigError("at most one region may be the complement");
        if (!rests.empty()) masks.push_back(complement_mask(rests.front()->name, masks));
        return RegionSet(std::move(masks), discovery.allow_partial);
    }
};

inline ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
    using detail::get_or;
    using detail::reject_unknown;

    reject_unknown(j, "(top level)",
                   {"version", "seed", "out", "schedule", "data", "train", "discovery", "edit",
                    "eval"});
    ExperimentConfig c;
    c.version = get_or(j, "version", 1);
    if (c.version != 1)
        throw ConfigError("unsupported configuration version " + std::to_string(c.version));
    c.seed = get_or<std::uint64_t>(j, "seed", 7);
    c.out = get_or<std::string>(j, "out", "");

    if (j.contains("schedule")) {
        const auto& s = j.at("schedule");
        reject_unknown(s, "schedule", {"timesteps", "beta_start", "beta_end", "eta"});
        c.schedule.timesteps = get_or(s, "timesteps", c.schedule.timesteps);
        c.schedule.beta_start = get_or(s, "beta_start", c.schedule.beta_start);
        c.schedule.beta_end = get_or(s, "beta_end", c.schedule.beta_end);
        c.schedule.eta = get_or(s, "eta", c.schedule.eta);
    }
    if (j.contains("data")) {
        const auto& s = j.at("data");
        reject_unknown(s, "data", {"count", "image_size"});
        c.data.count = get_or(s, "count", c.data.count);
        c.data.image_size = get_or(s, "image_size", c.data.image_size);
    }
    if (j.contains("train")) {
        const auto& s = j.at("train");
        reject_unknown(s, "train",
                       {"steps", "batch_size", "learning_rate", "holdout_fraction",
                        "loss_threshold", "log_every", "dataset", "resume"});
        c.train.steps = get_or(s, "steps", c.train.steps);
        c.train.batch_size = get_or(s, "batch_size", c.train.batch_size);
        c.train.learning_rate = get_or(s, "learning_rate", c.train.learning_rate);
        c.train.holdout_fraction = get_or(s, "holdout_fraction", c.train.holdout_fraction);
        c.train.loss_threshold = get_or(s, "loss_threshold", c.train.loss_threshold);
        c.train.log_every = get_or(s, "log_every", c.train.log_every);
        c.train.dataset = get_or(s, "dataset", c.train.dataset);
        c.train.resume = get_or(s, "resume", c.train.resume);
    }
    if (j.contains("discovery")) {
        const auto& s = j.at("discovery");
        reject_unknown(s, "discovery",
                       {"checkpoint", "dataset", "image_index", "timestep_frac", "rank",
                        "joint_rank", "individual_rank", "no_jive", "allow_partial", "regions"});
        c.discovery.checkpoint = get_or(s, "checkpoint", c.discovery.checkpoint);
        c.discovery.dataset = get_or(s, "dataset", c.discovery.dataset);
        c.discovery.image_index = get_or(s, "image_index", c.discovery.image_index);
        c.discovery.timestep_frac = get_or(s, "timestep_frac", c.discovery.timestep_frac);
        c.discovery.rank = get_or(s, "rank", c.discovery.rank);
        c.discovery.joint_rank = get_or(s, "joint_rank", c.discovery.joint_rank);
        c.discovery.individual_rank = get_or(s, "individual_rank", c.discovery.individual_rank);
        c.discovery.no_jive = get_or(s, "no_jive", c.discovery.no_jive);
        c.discovery.allow_partial = get_or(s, "allow_partial", c.discovery.allow_partial);
        if (s.contains("regions")) {
            if (!s.at("regions").is_array())
                throw ConfigError("'discovery.regions' must be an array");
            for (const auto& r : s.at("regions")) {
                reject_unknown(r, "discovery.regions[]", {"name", "rect", "pgm", "rest"});
                RegionSpec spec;
                spec.name = get_or<std::string>(r, "name", "");
                if (spec.name.empty()) throw ConfigError("region entry needs a 'name'");
                spec.is_rest = get_or(r, "rest", false);
                if (r.contains("rect")) {
                    auto v = r.at("rect").get<std::vector<int>>();
                    if (v.size() != 4)
                        throw ConfigError("region '" + spec.name +
                                          "': 'rect' must be [x0, y0, x1, y1]");
                    spec.has_rect = true;
                    std::copy(v.begin(), v.end(), spec.rect.begin());
                }
                spec.pgm = get_or<std::string>(r, "pgm", "");
                const int sources = (spec.is_rest ? 1 : 0) + (spec.has_rect ? 1 : 0) +
                                    (spec.pgm.empty() ? 0 : 1);
                if (sources != 1)
                    throw ConfigError("region '" + spec.name +
                                      "': give exactly one of 'rect', 'pgm', or 'rest'");
                c.discovery.regions.push_back(std::move(spec));
            }
            int rests = 0;
            for (const auto& spec : c.discovery.regions)
                if (spec.is_rest) ++rests;
            if (rests > 1) throw ConfigError("at most one region may be the complement");
        }
    }
    if (j.contains("edit")) {
        const auto& s = j.at("edit");
        reject_unknown(s, "edit",
                       {"checkpoint", "dataset", "archive", "directions", "strengths", "window",
                        "images", "grid"});
        c.edit.checkpoint = get_or(s, "checkpoint", c.edit.checkpoint);
        c.edit.dataset = get_or(s, "dataset", c.edit.dataset);
        c.edit.archive = get_or(s, "archive", c.edit.archive);
        c.edit.directions = get_or(s, "directions", c.edit.directions);
        c.edit.strengths = get_or(s, "strengths", c.edit.strengths);
        if (s.contains("window")) {
            auto w = s.at("window").get<std::vector<double>>();
            if (w.size() != 2) throw ConfigError("'edit.window' must be [hi_frac, lo_frac]");
            c.edit.window_hi = w[0];
            c.edit.window_lo = w[1];
        }
        c.edit.images = get_or(s, "images", c.edit.images);
        c.edit.grid = get_or(s, "grid", c.edit.grid);
    }
    if (j.contains("eval")) {
        const auto& s = j.at("eval");
        reject_unknown(s, "eval",
                       {"checkpoint", "dataset", "archives", "images", "image_count", "strength",
                        "window"});
        c.eval.checkpoint = get_or(s, "checkpoint", c.eval.checkpoint);
        c.eval.dataset = get_or(s, "dataset", c.eval.dataset);
        c.eval.archives = get_or(s, "archives", c.eval.archives);
        c.eval.images = get_or(s, "images", c.eval.images);
        c.eval.image_count = get_or(s, "image_count", c.eval.image_count);
        c.eval.strength = get_or(s, "strength", c.eval.strength);
        if (s.contains("window")) {
            auto w = s.at("window").get<std::vector<double>>();
            if (w.size() != 2) throw ConfigError("'eval.window' must be [hi_frac, lo_frac]");
            c.eval.window_hi = w[0];
            c.eval.window_lo = w[1];
        }
    }
    c.validate();
    return c;
}

inline void ExperimentConfig::validate() const {
    if (schedule.timesteps < 1) throw ConfigError("schedule.timesteps must be >= 1");
    if (!(schedule.beta_start > 0.0) || !(schedule.beta_end < 1.0) ||
        schedule.beta_start > schedule.beta_end)
        throw ConfigError("schedule betas must satisfy 0 < beta_start <= beta_end < 1");
    if (schedule.eta < 0.0) throw ConfigError("schedule.eta must be >= 0");
    if (data.count < 1) throw ConfigError("empty dataset requested (data.count must be >= 1)");
    if (data.image_size < 8 || data.image_size % 8 != 0)
        throw ConfigError("data.image_size must be a positive multiple of 8");
    if (train.steps < 1) throw ConfigError("train.steps must be >= 1");
    if (train.batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
    if (!(train.learning_rate >= 0.0)) throw ConfigError("train.learning_rate must be >= 0");
    if (train.holdout_fraction < 0.0 || train.holdout_fraction >= 1.0)
        throw ConfigError("train.holdout_fraction must lie in [0, 1)");
    if (train.log_every < 1) throw ConfigError("train.log_every must be >= 1");
    if (discovery.image_index < 0) throw ConfigError("discovery.image_index must be >= 0");
    if (!(discovery.timestep_frac > 0.0) || discovery.timestep_frac > 1.0)
        throw ConfigError("discovery.timestep_frac must lie in (0, 1]");
    if (discovery.rank < 1) throw ConfigError("discovery.rank must be >= 1");
    if (discovery.joint_rank < 0 || discovery.individual_rank < 0)
        throw ConfigError("discovery ranks must be >= 0");
    for (double a : edit.strengths)
        if (!std::isfinite(a)) throw ConfigError("edit.strengths must be finite");
    auto check_window = [](double hi, double lo, const std::string& where) {
        if (!(lo >= 0.0) || !(hi <= 1.0) || lo > hi)
            throw ConfigError(where + ".window must satisfy 0 <= lo <= hi <= 1");
    };
    check_window(edit.window_hi, edit.window_lo, "edit");
    check_window(eval.window_hi, eval.window_lo, "eval");
    for (int i : edit.images)
        if (i < 0) throw ConfigError("edit.images indices must be >= 0");
    for (int i : eval.images)
        if (i < 0) throw ConfigError("eval.images indices must be >= 0");
    if (eval.image_count < 1) throw ConfigError("eval.image_count must be >= 1");
    if (!std::isfinite(eval.strength)) throw ConfigError("eval.strength must be finite");
}

inline nlohmann::json ExperimentConfig::to_json() const {
    nlohmann::json j;
    j["version"] = version;
    j["seed"] = seed;
    j["out"] = out;
    j["schedule"] = {{"timesteps", schedule.timesteps},
                     {"beta_start", schedule.beta_start},
                     {"beta_end", schedule.beta_end},
                     {"eta", schedule.eta}};
    j["data"] = {{"count", data.count}, {"image_size", data.image_size}};
    j["train"] = {{"steps", train.steps},
                  {"batch_size", train.batch_size},
                  {"learning_rate", train.learning_rate},
                  {"holdout_fraction", train.holdout_fraction},
                  {"loss_threshold", train.loss_threshold},
                  {"log_every", train.log_every},
                  {"dataset", train.dataset},
                  {"resume", train.resume}};
    nlohmann::json regions = nlohmann::json::array();
    for (const auto& r : discovery.regions) {
        nlohmann::json e;
        e["name"] = r.name;
        if (r.is_rest) e["rest"] = true;
        if (r.has_rect) e["rect"] = {r.rect[0], r.rect[1], r.rect[2], r.rect[3]};
        if (!r.pgm.empty()) e["pgm"] = r.pgm;
        regions.push_back(e);
    }
    j["discovery"] = {{"checkpoint", discovery.checkpoint},
                      {"dataset", discovery.dataset},
                      {"image_index", discovery.image_index},
                      {"timestep_frac", discovery.timestep_frac},
                      {"rank", discovery.rank},
                      {"joint_rank", discovery.joint_rank},
                      {"individual_rank", discovery.individual_rank},
                      {"no_jive", discovery.no_jive},
                      {"allow_partial", discovery.allow_partial},
                      {"regions", regions}};
    j["edit"] = {{"checkpoint", edit.checkpoint},
                 {"dataset", edit.dataset},
                 {"archive", edit.archive},
                 {"directions", edit.directions},
                 {"strengths", edit.strengths},
                 {"window", {edit.window_hi, edit.window_lo}},
                 {"images", edit.images},
                 {"grid", edit.grid}};
    j["eval"] = {{"checkpoint", eval.checkpoint},
                 {"dataset", eval.dataset},
                 {"archives", eval.archives},
                 {"images", eval.images},
                 {"image_count", eval.image_count},
                 {"strength", eval.strength},
                 {"window", {eval.window_hi, eval.window_lo}}};
    return j;
}

}  // namespace hspace::cli
