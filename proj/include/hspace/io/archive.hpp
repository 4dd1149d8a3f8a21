#pragma once

// Direction archives: the durable output of discovery. A directory holding a
// versioned JSON manifest (provenance, ranks, per-direction records,
// decomposition diagnostics), the direction vectors as one matrix (row k =
// direction k, matching the manifest order), and the region masks so that
// later evaluation can rebuild the exact regions of interest.

#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "hspace/core/version.hpp"
#include "hspace/direction.hpp"
#include "hspace/io/checkpoint.hpp"
#include "hspace/io/tensor_file.hpp"
#include "hspace/op/region.hpp"
#include "hspace/pipeline.hpp"

namespace hspace::io {

struct DirectionArchive {
    std::string toolkit_version = kToolkitVersion;
    std::string model_hash;
    std::string source_image_id;
    int timestep = -1;
    int rank = 0;       // probe rank per region
    int joint_rank = 0;
    std::vector<int> individual_ranks;
    bool no_jive = false;
    std::vector<RegionMask> regions;
    std::vector<SemanticDirection> directions;

    // decomposition diagnostics
    bool jive_converged = false;
    int jive_iterations = 0;
    double jive_final_change = 0.0;
    std::vector<double> residual_history;
    std::vector<double> orthogonality_history;
    std::map<std::string, std::vector<double>> singular_values;  // per-region probe spectrum
    std::vector<std::string> warnings;

    const SemanticDirection& find(DirectionComponent comp, const std::string& region,
                                  int rank_index) const {
        for (const auto& d : directions)
            if (d.component == comp && (comp == DirectionComponent::joint || d.region == region) &&
                d.rank_index == rank_index)
                return d;
        throw std::invalid_argument(std::string("direction archive: no direction ") +
                                    to_string(comp) + ":" + region + ":" +
                                    std::to_string(rank_index));
    }
};

inline DirectionArchive make_archive(const DiscoveryResult& res, const RegionSet& regions,
                                     const DiscoveryOptions& opt) {
    DirectionArchive a;
    a.model_hash = res.model_hash;
    a.source_image_id = res.image_id;
    a.timestep = res.timestep;
    a.rank = opt.rank;
    a.joint_rank = opt.joint_rank;
    a.individual_ranks = opt.individual_ranks;
    if (a.individual_ranks.size() == 1 && regions.size() > 1)
        a.individual_ranks.assign(regions.size(), a.individual_ranks[0]);
    a.no_jive = !res.jive_ran;
    a.regions = regions.regions;
    a.directions = res.joint_directions;
    a.directions.insert(a.directions.end(), res.individual_directions.begin(),
                        res.individual_directions.end());
    a.warnings = res.warnings;
    if (res.jive_ran) {
        a.jive_converged = res.jive.converged;
        a.jive_iterations = res.jive.iterations;
        a.jive_final_change = res.jive.final_change;
        a.residual_history = res.jive.residual_history;
        a.orthogonality_history = res.jive.orthogonality_history;
    }
    for (std::size_t i = 0; i < res.probes.size() && i < regions.size(); ++i) {
        const Vector& s = res.probes[i].factors.s;
        a.singular_values[regions[i].name] = std::vector<double>(s.data(), s.data() + s.size());
    }
    return a;
}

inline void save_direction_archive(const std::string& dir, const DirectionArchive& a) {
    if (a.directions.empty())
        throw std::invalid_argument("save_direction_archive: archive has no directions");
    std::filesystem::create_directories(dir);

    const auto dim = a.directions.front().v.size();
    DenseMatrix dirs(static_cast<Index>(a.directions.size()), dim);
    nlohmann::json recs = nlohmann::json::array();
    for (std::size_t k = 0; k < a.directions.size(); ++k) {
        const SemanticDirection& d = a.directions[k];
        if (d.v.size() != dim)
            throw std::invalid_argument("save_direction_archive: direction dimension mismatch");
        dirs.row(static_cast<Index>(k)) = d.v.transpose();
        recs.push_back({{"index", k},
                        {"component", to_string(d.component)},
                        {"region", d.region},
                        {"rank_index", d.rank_index},
                        {"timestep", d.timestep},
                        {"source_image_id", d.source_image_id},
                        {"model_hash", d.model_hash}});
    }
    write_matrix(dir + "/directions.ntsr", dirs);

    // Region masks stacked into one tensor, channel-0 spatial plane per region.
    if (!a.regions.empty()) {
        const RegionMask& r0 = a.regions.front();
        TensorFile t;
        t.dtype = Dtype::f64;
        t.dims = {static_cast<std::uint64_t>(a.regions.size()),
                  static_cast<std::uint64_t>(r0.h), static_cast<std::uint64_t>(r0.w)};
        std::vector<double> vals;
        vals.reserve(a.regions.size() * static_cast<std::size_t>(r0.h) * r0.w);
        for (const auto& r : a.regions) {
            if (r.h != r0.h || r.w != r0.w)
                throw std::invalid_argument("save_direction_archive: ragged region masks");
            for (int i = 0; i < r.h * r.w; ++i)
                vals.push_back(static_cast<double>(r.mask[static_cast<std::size_t>(i)]));
        }
        t = TensorFile::from_f64(t.dims, vals.data());
        write_tensor(dir + "/regions.ntsr", t);
    }

    nlohmann::json j;
    j["archive_version"] = 1;
    j["toolkit_version"] = a.toolkit_version;
    j["model_hash"] = a.model_hash;
    j["source_image_id"] = a.source_image_id;
    j["timestep"] = a.timestep;
    j["rank"] = a.rank;
    j["joint_rank"] = a.joint_rank;
    j["individual_ranks"] = a.individual_ranks;
    j["no_jive"] = a.no_jive;
    nlohmann::json regmeta = nlohmann::json::array();
    for (const auto& r : a.regions)
        regmeta.push_back({{"name", r.name}, {"channels", r.c}, {"pixel_count", r.pixel_count}});
    j["regions"] = regmeta;
    j["directions"] = recs;
    j["jive"] = {{"converged", a.jive_converged},
                 {"iterations", a.jive_iterations},
                 {"final_change", a.jive_final_change},
                 {"residual_history", a.residual_history},
                 {"orthogonality_history", a.orthogonality_history}};
    j["singular_values"] = a.singular_values;
    j["warnings"] = a.warnings;
    write_json_file(dir + "/archive.json", j);
}

inline DirectionArchive load_direction_archive(const std::string& dir) {
    const nlohmann::json j = read_json_file(dir + "/archive.json");
    if (j.value("archive_version", 0) != 1)
        throw std::runtime_error("unsupported direction archive format in " + dir);

    DirectionArchive a;
    a.toolkit_version = j.at("toolkit_version").get<std::string>();
    a.model_hash = j.at("model_hash").get<std::string>();
    a.source_image_id = j.at("source_image_id").get<std::string>();
    a.timestep = j.at("timestep").get<int>();
    a.rank = j.at("rank").get<int>();
    a.joint_rank = j.at("joint_rank").get<int>();
    a.individual_ranks = j.at("individual_ranks").get<std::vector<int>>();
    a.no_jive = j.at("no_jive").get<bool>();
    a.jive_converged = j.at("jive").at("converged").get<bool>();
    a.jive_iterations = j.at("jive").at("iterations").get<int>();
    a.jive_final_change = j.at("jive").at("final_change").get<double>();
    a.residual_history = j.at("jive").at("residual_history").get<std::vector<double>>();
    a.orthogonality_history = j.at("jive").at("orthogonality_history").get<std::vector<double>>();
    a.singular_values =
        j.at("singular_values").get<std::map<std::string, std::vector<double>>>();
    a.warnings = j.at("warnings").get<std::vector<std::string>>();

    DenseMatrix dirs = read_matrix(dir + "/directions.ntsr");
    const auto& recs = j.at("directions");
    if (static_cast<Index>(recs.size()) != dirs.rows())
        throw std::runtime_error("direction archive manifest/tensor mismatch in " + dir);
    for (std::size_t k = 0; k < recs.size(); ++k) {
        const auto& r = recs[k];
        SemanticDirection d;
        d.v = dirs.row(static_cast<Index>(k)).transpose();
        d.component = direction_component_from_string(r.at("component").get<std::string>());
        d.region = r.at("region").get<std::string>();
        d.rank_index = r.at("rank_index").get<int>();
        d.timestep = r.at("timestep").get<int>();
        d.source_image_id = r.at("source_image_id").get<std::string>();
        d.model_hash = r.at("model_hash").get<std::string>();
        a.directions.push_back(std::move(d));
    }

    if (std::filesystem::exists(dir + "/regions.ntsr")) {
        TensorFile t = read_tensor(dir + "/regions.ntsr");
        if (t.dims.size() != 3) throw std::runtime_error("expected 3-d region tensor in " + dir);
        const auto vals = t.as_f64();
        const int h = static_cast<int>(t.dims[1]);
        const int w = static_cast<int>(t.dims[2]);
        const auto& regmeta = j.at("regions");
        if (regmeta.size() != t.dims[0])
            throw std::runtime_error("region manifest/tensor mismatch in " + dir);
        for (std::size_t i = 0; i < regmeta.size(); ++i) {
            std::vector<std::uint8_t> sp(static_cast<std::size_t>(h) * w);
            for (std::size_t p = 0; p < sp.size(); ++p)
                sp[p] = vals[i * sp.size() + p] != 0.0 ? 1 : 0;
            a.regions.push_back(RegionMask::from_spatial(
                regmeta[i].at("name").get<std::string>(), h, w,
                regmeta[i].at("channels").get<int>(), sp));
        }
    }
    return a;
}

}  // namespace hspace::io
