#pragma once

// The six toolkit commands as library functions, shared by the command-line
// binary and the test suite. Every command takes a validated configuration
// plus an output directory, holds an exclusive lock on that directory while
// it runs, and finishes by writing a manifest that records the resolved
// configuration, input hashes, seed, and produced files. Re-running a command
// from its manifest reproduces the outputs.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "hspace/cli/config.hpp"
#include "hspace/core/rng.hpp"
#include "hspace/core/version.hpp"
#include "hspace/diffusion/ddim.hpp"
#include "hspace/diffusion/model.hpp"
#include "hspace/diffusion/synth.hpp"
#include "hspace/diffusion/train.hpp"
#include "hspace/io/archive.hpp"
#include "hspace/io/checkpoint.hpp"
#include "hspace/io/dataset.hpp"
#include "hspace/io/image_io.hpp"
#include "hspace/io/manifest.hpp"
#include "hspace/metrics.hpp"
#include "hspace/pipeline.hpp"

namespace hspace::cli {

namespace detail {

inline std::string zero_pad(int v, int width = 4) {
    std::string s = std::to_string(v);
    while (static_cast<int>(s.size()) < width) s.insert(s.begin(), '0');
    return s;
}

inline void write_image_tensor(const std::string& path, const ImageTensor& img) {
    io::write_tensor(path, io::TensorFile::from_f64(
                               {static_cast<std::uint64_t>(img.c),
                                static_cast<std::uint64_t>(img.h),
                                static_cast<std::uint64_t>(img.w)},
                               img.data.data()));
}

inline ImageTensor read_image_tensor(const std::string& path) {
    io::TensorFile t = io::read_tensor(path);
    if (t.dims.size() != 3) throw std::runtime_error("expected 3-d image tensor: " + path);
    ImageTensor img(static_cast<int>(t.dims[1]), static_cast<int>(t.dims[2]),
                    static_cast<int>(t.dims[0]));
    const auto vals = t.as_f64();
    std::copy(vals.begin(), vals.end(), img.data.begin());
    return img;
}

// "joint:K" or "individual:REGION:K"
inline const SemanticDirection& select_direction(const io::DirectionArchive& a,
                                                 const std::string& sel) {
    std::vector<std::string> parts;
    std::string cur;
    for (char ch : sel) {
        if (ch == ':') {
            parts.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(ch);
        }
    }
    parts.push_back(cur);
    try {
        if (parts.size() == 2 && parts[0] == "joint")
            return a.find(DirectionComponent::joint, "", std::stoi(parts[1]));
        if (parts.size() == 3 && parts[0] == "individual")
            return a.find(DirectionComponent::individual, parts[1], std::stoi(parts[2]));
    } catch (const std::invalid_argument& e) {
        throw std::runtime_error(std::string(e.what()) + " (selector '" + sel + "')");
    }
    throw std::runtime_error("bad direction selector '" + sel +
                             "'; use joint:K or individual:REGION:K");
}

// Rows = strengths, columns = cumulative prefixes; 2-pixel white gutters.
inline ImageTensor montage(const std::vector<std::vector<ImageTensor>>& cells, int gap = 2) {
    if (cells.empty() || cells.front().empty())
        throw std::invalid_argument("montage: empty grid");
    const ImageTensor& c0 = cells.front().front();
    const int rows = static_cast<int>(cells.size());
    const int cols = static_cast<int>(cells.front().size());
    ImageTensor out(rows * c0.h + (rows - 1) * gap, cols * c0.w + (cols - 1) * gap, 1, 1.0);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) {
            const ImageTensor& cell = cells[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
            for (int y = 0; y < cell.h; ++y)
                for (int x = 0; x < cell.w; ++x)
                    out.at(0, i * (c0.h + gap) + y, j * (c0.w + gap) + x) = cell.at(0, y, x);
        }
    return out;
}

inline std::string dataset_input_hash(const FaceDataset& ds) { return ds.hash_hex(); }

struct LoadedModel {
    io::Checkpoint ck;
    std::string hash;
};

inline LoadedModel load_model(const std::string& checkpoint_dir) {
    if (checkpoint_dir.empty())
        throw ConfigError("no checkpoint directory configured");
    LoadedModel lm{io::load_checkpoint(checkpoint_dir), ""};
    lm.hash = lm.ck.model.param_hash_hex();
    return lm;
}

inline std::vector<int> resolve_image_indices(const std::vector<int>& given, int fallback_count,
                                              int dataset_size) {
    std::vector<int> idx = given;
    if (idx.empty()) {
        const int n = std::min(fallback_count, dataset_size);
        for (int i = 0; i < n; ++i) idx.push_back(i);
    }
    for (int i : idx)
        if (i >= dataset_size)
            throw ConfigError("image index " + std::to_string(i) +
                              " out of range for dataset of size " + std::to_string(dataset_size));
    return idx;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// synth-data

inline io::RunManifest cmd_synth_data(const ExperimentConfig& cfg, const std::string& out_dir) {
    io::DirectoryLock lock(out_dir);
    SynthConfig sc;
    sc.image_size = cfg.data.image_size;
    sc.count = cfg.data.count;
    sc.seed = seed_for(cfg.seed, "synth-data");
    FaceDataset ds = synth_dataset(sc);
    io::save_dataset(out_dir, ds);

    io::RunManifest m;
    m.command = "synth-data";
    m.seed = cfg.seed;
    m.config = cfg.to_json();
    m.config["out"] = out_dir;
    m.outputs = {"images.ntsr", "factors.ntsr", "meta.json"};
    const int previews = std::min<int>(8, static_cast<int>(ds.images.size()));
    for (int i = 0; i < previews; ++i) {
        const std::string name = "preview_" + detail::zero_pad(i) + ".png";
        io::write_png_gray(out_dir + "/" + name, ds.images[static_cast<std::size_t>(i)]);
        m.outputs.push_back(name);
    }
    m.inputs["dataset"] = ds.hash_hex();  // content hash of what was produced
    io::write_run_manifest(out_dir, m);
    return m;
}

// ---------------------------------------------------------------------------
// train

inline io::RunManifest cmd_train(const ExperimentConfig& cfg, const std::string& out_dir) {
    if (cfg.train.dataset.empty()) throw ConfigError("train.dataset directory is required");
    io::DirectoryLock lock(out_dir);
    FaceDataset ds = io::load_dataset(cfg.train.dataset);

    TrainConfig tc;
    tc.steps = cfg.train.steps;
    tc.batch_size = cfg.train.batch_size;
    tc.learning_rate = cfg.train.learning_rate;
    tc.holdout_fraction = cfg.train.holdout_fraction;
    tc.loss_threshold = cfg.train.loss_threshold;
    tc.log_every = cfg.train.log_every;
    tc.seed = seed_for(cfg.seed, "train");
    const NoiseSchedule schedule = cfg.make_schedule();

    io::RunManifest m;
    m.command = "train";
    m.seed = cfg.seed;
    m.config = cfg.to_json();
    m.config["out"] = out_dir;
    m.inputs["dataset"] = ds.hash_hex();

    TrainResult result;
    if (!cfg.train.resume.empty()) {
        io::Checkpoint prev = io::load_checkpoint(cfg.train.resume);
        m.inputs["resume"] = prev.model.param_hash_hex();
        result = train_denoiser(ds, schedule, tc, &prev.model, &prev.state);
    } else {
        result = train_denoiser(ds, schedule, tc);
    }
    m.warnings = result.warnings;

    io::save_checkpoint(out_dir, result.model, result.state);
    {
        std::ofstream os(out_dir + "/loss_curve.tsv", std::ios::trunc);
        os << "index\tloss\n";
        for (std::size_t i = 0; i < result.model.meta.loss_curve.size(); ++i)
            os << i << "\t" << result.model.meta.loss_curve[i] << "\n";
    }
    m.outputs = {"params.ntsr", "adam_m.ntsr", "adam_v.ntsr", "meta.json", "loss_curve.tsv"};
    io::write_run_manifest(out_dir, m);
    return m;
}

// ---------------------------------------------------------------------------
// invert

inline io::RunManifest cmd_invert(const ExperimentConfig& cfg, const std::string& out_dir) {
    io::DirectoryLock lock(out_dir);
    detail::LoadedModel lm = detail::load_model(cfg.discovery.checkpoint);
    if (cfg.discovery.dataset.empty()) throw ConfigError("discovery.dataset directory is required");
    FaceDataset ds = io::load_dataset(cfg.discovery.dataset);
    const auto idx = static_cast<std::size_t>(cfg.discovery.image_index);
    if (idx >= ds.images.size())
        throw ConfigError("discovery.image_index out of range for dataset of size " +
                          std::to_string(ds.images.size()));
    const NoiseSchedule schedule = cfg.make_schedule();

    const ImageTensor& x0 = ds.images[idx];
    ImageTensor x_T = ddim_invert(x0, lm.ck.model, schedule);
    ImageTensor recon = ddim_generate(x_T, lm.ck.model, schedule);

    detail::write_image_tensor(out_dir + "/latent.ntsr", x_T);
    detail::write_image_tensor(out_dir + "/reconstruction.ntsr", recon);
    io::write_png_gray(out_dir + "/original.png", x0);
    io::write_png_gray(out_dir + "/reconstruction.png", recon);

    nlohmann::json report;
    report["image_index"] = cfg.discovery.image_index;
    report["round_trip_mse"] = mse(x0, recon);
    report["round_trip_max_abs"] = max_abs_diff(x0, recon);
    io::write_json_file(out_dir + "/report.json", report);

    io::RunManifest m;
    m.command = "invert";
    m.seed = cfg.seed;
    m.config = cfg.to_json();
    m.config["out"] = out_dir;
    m.inputs["dataset"] = ds.hash_hex();
    m.inputs["checkpoint"] = lm.hash;
    m.outputs = {"latent.ntsr", "reconstruction.ntsr", "original.png", "reconstruction.png",
                 "report.json"};
    io::write_run_manifest(out_dir, m);
    return m;
}

// ---------------------------------------------------------------------------
// discover

inline io::RunManifest cmd_discover(const ExperimentConfig& cfg, const std::string& out_dir) {
    io::DirectoryLock lock(out_dir);
    detail::LoadedModel lm = detail::load_model(cfg.discovery.checkpoint);
    if (cfg.discovery.dataset.empty()) throw ConfigError("discovery.dataset directory is required");
    FaceDataset ds = io::load_dataset(cfg.discovery.dataset);
    const auto idx = static_cast<std::size_t>(cfg.discovery.image_index);
    if (idx >= ds.images.size())
        throw ConfigError("discovery.image_index out of range for dataset of size " +
                          std::to_string(ds.images.size()));

    const NoiseSchedule schedule = cfg.make_schedule();
    const RegionSet regions = cfg.make_regions(ds.image_size);
    DiscoveryEngine engine(lm.ck.model, schedule, seed_for(cfg.seed, "discover"));

    DiscoveryOptions opt;
    opt.rank = cfg.discovery.rank;
    opt.joint_rank = cfg.discovery.joint_rank;
    opt.individual_ranks = {cfg.discovery.individual_rank};
    opt.run_jive = !cfg.discovery.no_jive;

    const std::string image_id = "image-" + std::to_string(cfg.discovery.image_index);
    DiscoveryResult res =
        engine.discover(ds.images[idx], image_id, cfg.analysis_timestep(), regions, opt);

    io::DirectionArchive archive = io::make_archive(res, regions, opt);
    io::save_direction_archive(out_dir, archive);

    io::RunManifest m;
    m.command = "discover";
    m.seed = cfg.seed;
    m.config = cfg.to_json();
    m.config["out"] = out_dir;
    m.inputs["dataset"] = ds.hash_hex();
    m.inputs["checkpoint"] = lm.hash;
    m.outputs = {"archive.json", "directions.ntsr", "regions.ntsr"};
    m.warnings = res.warnings;
    io::write_run_manifest(out_dir, m);
    return m;
}

// ---------------------------------------------------------------------------
// edit

inline io::RunManifest cmd_edit(const ExperimentConfig& cfg, const std::string& out_dir) {
    io::DirectoryLock lock(out_dir);
    detail::LoadedModel lm = detail::load_model(cfg.edit.checkpoint);
    if (cfg.edit.dataset.empty()) throw ConfigError("edit.dataset directory is required");
    FaceDataset ds = io::load_dataset(cfg.edit.dataset);
    if (cfg.edit.archive.empty()) throw ConfigError("edit.archive directory is required");
    io::DirectionArchive archive = io::load_direction_archive(cfg.edit.archive);
    if (cfg.edit.directions.empty()) throw ConfigError("edit.directions must select at least one direction");

    std::vector<SemanticDirection> dirs;
    for (const auto& sel : cfg.edit.directions)
        dirs.push_back(detail::select_direction(archive, sel));

    const NoiseSchedule schedule = cfg.make_schedule();
    DiscoveryEngine engine(lm.ck.model, schedule, seed_for(cfg.seed, "edit"));
    const auto [win_hi, win_lo] = cfg.edit_window(cfg.edit.window_hi, cfg.edit.window_lo);

    const std::vector<int> indices =
        detail::resolve_image_indices(cfg.edit.images, 1, static_cast<int>(ds.images.size()));

    io::RunManifest m;
    m.command = "edit";
    m.seed = cfg.seed;
    m.config = cfg.to_json();
    m.config["out"] = out_dir;
    m.inputs["dataset"] = ds.hash_hex();
    m.inputs["checkpoint"] = lm.hash;
    m.inputs["archive"] = hash_file_hex(cfg.edit.archive + "/directions.ntsr");

    std::filesystem::create_directories(out_dir + "/tensors");
    for (int index : indices) {
        const ImageTensor& x0 = ds.images[static_cast<std::size_t>(index)];
        const std::string tag = detail::zero_pad(index);
        io::write_png_gray(out_dir + "/original_" + tag + ".png", x0);
        m.outputs.push_back("original_" + tag + ".png");

        if (cfg.edit.grid) {
            DirectionGrid grid = engine.direction_grid(x0, dirs, cfg.edit.strengths);
            ImageTensor sheet = detail::montage(grid.cells);
            io::write_png_gray(out_dir + "/grid_" + tag + ".png", sheet);
            m.outputs.push_back("grid_" + tag + ".png");
            for (std::size_t i = 0; i < grid.cells.size(); ++i)
                for (std::size_t jcol = 0; jcol < grid.cells[i].size(); ++jcol) {
                    const std::string name = "tensors/grid_" + tag + "_s" + std::to_string(i) +
                                             "_p" + std::to_string(jcol) + ".ntsr";
                    detail::write_image_tensor(out_dir + "/" + name, grid.cells[i][jcol]);
                    m.outputs.push_back(name);
                }
        } else {
            if (cfg.edit.strengths.size() != dirs.size())
                throw ConfigError("edit: need one strength per selected direction (got " +
                                  std::to_string(dirs.size()) + " directions, " +
                                  std::to_string(cfg.edit.strengths.size()) + " strengths)");
            EditRequest req;
            req.directions = dirs;
            req.strengths = cfg.edit.strengths;
            req.window_hi = win_hi;
            req.window_lo = win_lo;
            req.image_id = "image-" + std::to_string(index);
            req.model_hash = archive.model_hash;
            ImageTensor edited = engine.apply_edit(x0, req, &m.warnings);
            io::write_png_gray(out_dir + "/edited_" + tag + ".png", edited);
            detail::write_image_tensor(out_dir + "/tensors/edited_" + tag + ".ntsr", edited);
            m.outputs.push_back("edited_" + tag + ".png");
            m.outputs.push_back("tensors/edited_" + tag + ".ntsr");
        }
    }
    io::write_run_manifest(out_dir, m);
    return m;
}

// ---------------------------------------------------------------------------
// eval

struct EvalRow {
    std::string archive;
    std::string component;
    std::string region;
    int rank_index = 0;
    double roir_value = -1.0;  // -1: not applicable (joint directions)
    int images_used = 0;
    Vector mean_factor_delta;  // 5 entries
};

inline io::RunManifest cmd_eval(const ExperimentConfig& cfg, const std::string& out_dir) {
    io::DirectoryLock lock(out_dir);
    detail::LoadedModel lm = detail::load_model(cfg.eval.checkpoint);
    if (cfg.eval.dataset.empty()) throw ConfigError("eval.dataset directory is required");
    FaceDataset ds = io::load_dataset(cfg.eval.dataset);
    if (cfg.eval.archives.empty())
        throw std::runtime_error("eval: empty edit set (no direction archives given)");

    const NoiseSchedule schedule = cfg.make_schedule();
    DiscoveryEngine engine(lm.ck.model, schedule, seed_for(cfg.seed, "eval"));
    const auto [win_hi, win_lo] = cfg.edit_window(cfg.eval.window_hi, cfg.eval.window_lo);
    const std::vector<int> indices = detail::resolve_image_indices(
        cfg.eval.images, cfg.eval.image_count, static_cast<int>(ds.images.size()));

    FactorRegressor regressor;
    regressor.fit(ds);

    // Baseline reconstructions, shared across all directions.
    std::map<int, ImageTensor> recon;
    for (int index : indices)
        recon.emplace(index, engine.reconstruct(ds.images[static_cast<std::size_t>(index)]));

    io::RunManifest m;
    m.command = "eval";
    m.seed = cfg.seed;
    m.config = cfg.to_json();
    m.config["out"] = out_dir;
    m.inputs["dataset"] = ds.hash_hex();
    m.inputs["checkpoint"] = lm.hash;

    std::vector<EvalRow> rows;
    for (const std::string& arch_dir : cfg.eval.archives) {
        io::DirectionArchive archive = io::load_direction_archive(arch_dir);
        m.inputs["archive:" + arch_dir] = hash_file_hex(arch_dir + "/directions.ntsr");
        for (const SemanticDirection& d : archive.directions) {
            EvalRow row;
            row.archive = arch_dir;
            row.component = to_string(d.component);
            row.region = d.component == DirectionComponent::joint ? "-" : d.region;
            row.rank_index = d.rank_index;
            row.mean_factor_delta = Vector::Zero(kFactorCount);

            EditBatch batch;
            const RegionMask* roi_mask = nullptr;
            if (d.component == DirectionComponent::individual) {
                for (const auto& r : archive.regions)
                    if (r.name == d.region) roi_mask = &r;
                if (!roi_mask)
                    throw std::runtime_error("eval: archive lacks region mask '" + d.region + "'");
                batch.roi = *roi_mask;
            }

            for (int index : indices) {
                EditRequest req;
                req.directions = {d};
                req.strengths = {cfg.eval.strength};
                req.window_hi = win_hi;
                req.window_lo = win_lo;
                req.image_id = "image-" + std::to_string(index);
                req.model_hash = archive.model_hash;
                ImageTensor edited =
                    engine.apply_edit(ds.images[static_cast<std::size_t>(index)], req, &m.warnings);
                const ImageTensor& base = recon.at(index);
                row.mean_factor_delta += factor_delta(base, edited, regressor);
                if (roi_mask) {
                    batch.originals.push_back(base);
                    batch.edited.push_back(edited);
                }
                ++row.images_used;
            }
            row.mean_factor_delta /= static_cast<double>(row.images_used);
            if (roi_mask) row.roir_value = roir(batch, &m.warnings);
            rows.push_back(std::move(row));
        }
    }

    // Delimiter-separated table.
    {
        std::ofstream os(out_dir + "/metrics.tsv", std::ios::trunc);
        os << "archive\tcomponent\tregion\trank\troir\timages";
        for (const auto& name : factor_names()) os << "\td_" << name;
        os << "\n";
        for (const auto& row : rows) {
            os << row.archive << "\t" << row.component << "\t" << row.region << "\t"
               << row.rank_index << "\t";
            if (row.roir_value < 0.0)
                os << "-";
            else
                os << row.roir_value;
            os << "\t" << row.images_used;
            for (Index k = 0; k < row.mean_factor_delta.size(); ++k)
                os << "\t" << row.mean_factor_delta[k];
            os << "\n";
        }
    }

    nlohmann::json report;
    report["toolkit_version"] = kToolkitVersion;
    report["strength"] = cfg.eval.strength;
    report["window"] = {win_hi, win_lo};
    report["images"] = indices;
    {
        const Vector& nf = regressor.noise_floor();
        report["regressor_noise_floor"] = std::vector<double>(nf.data(), nf.data() + nf.size());
    }
    nlohmann::json jrows = nlohmann::json::array();
    for (const auto& row : rows) {
        nlohmann::json r;
        r["archive"] = row.archive;
        r["component"] = row.component;
        r["region"] = row.region;
        r["rank_index"] = row.rank_index;
        if (row.roir_value >= 0.0) r["roir"] = row.roir_value;
        r["images"] = row.images_used;
        r["factor_delta"] = std::vector<double>(row.mean_factor_delta.data(),
                                                row.mean_factor_delta.data() + kFactorCount);
        jrows.push_back(r);
    }
    report["rows"] = jrows;
    report["warnings"] = m.warnings;
    io::write_json_file(out_dir + "/report.json", report);

    m.outputs = {"metrics.tsv", "report.json"};
    io::write_run_manifest(out_dir, m);
    return m;
}

}  // namespace hspace::cli
