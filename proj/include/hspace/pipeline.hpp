#pragma once

// End-to-end direction discovery and editing on the denoiser bottleneck.
//
// Discovery for one image:
//   1. deterministic inversion of the image to x_T,
//   2. deterministic reverse steps back to the analysis timestep t,
//   3. per-region low-rank probe of the bottleneck-to-output Jacobian,
//   4. reduction of each probe to an equivalent small matrix,
//   5. joint/individual decomposition across the region blocks.
//
// Editing replays the deterministic trajectory while adding a fixed vector to
// the bottleneck inside a timestep window. A zero-strength edit takes the
// unedited code path and therefore reproduces the plain reconstruction
// bit for bit.

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "hspace/core/hash.hpp"
#include "hspace/core/matrix.hpp"
#include "hspace/core/rng.hpp"
#include "hspace/diffusion/ddim.hpp"
#include "hspace/diffusion/image.hpp"
#include "hspace/diffusion/model.hpp"
#include "hspace/diffusion/schedule.hpp"
#include "hspace/direction.hpp"
#include "hspace/jive.hpp"
#include "hspace/op/operator.hpp"
#include "hspace/op/region.hpp"
#include "hspace/subspace.hpp"

namespace hspace {

struct DiscoveryOptions {
    int rank = 16;                         // probe rank per region
    int joint_rank = 8;                    // shared structure rank
    std::vector<int> individual_ranks{3};  // per region; size 1 broadcasts
    bool run_jive = true;                  // false: raw per-region row-space directions
    int subspace_max_iterations = 100;
    double subspace_tolerance = 1e-6;
    int jive_max_iterations = 500;
    double jive_tolerance = 1e-8;
};

struct DiscoveryResult {
    JiveDecomposition jive;  // populated when jive_ran
    bool jive_ran = false;
    std::vector<ReducedJacobianBlock> blocks;
    std::vector<SubspaceIterationResult> probes;  // aligned with blocks
    std::vector<SemanticDirection> joint_directions;
    std::vector<SemanticDirection> individual_directions;
    int timestep = -1;
    std::string model_hash;
    std::string image_id;
    std::vector<std::string> warnings;
};

struct EditRequest {
    std::vector<SemanticDirection> directions;
    std::vector<double> strengths;  // one per direction
    int window_hi = -1;             // highest timestep with injection; -1 means T
    int window_lo = 0;              // lowest timestep with injection
    std::string image_id;           // target image, informational
    std::string model_hash;         // model the directions came from

    void validate(int schedule_T) const {
        if (directions.size() != strengths.size())
            throw std::invalid_argument("EditRequest: directions and strengths count mismatch");
        for (double a : strengths)
            if (!std::isfinite(a)) throw std::invalid_argument("EditRequest: non-finite strength");
        const int hi = window_hi < 0 ? schedule_T : window_hi;
        if (window_lo < 0 || hi > schedule_T || window_lo > hi)
            throw std::invalid_argument(
                "EditRequest: timestep window must satisfy 0 <= lo <= hi <= T");
    }
};

struct DirectionGrid {
    std::vector<double> strengths;                // row labels
    std::size_t prefix_count = 0;                 // column labels: 1..prefix_count
    std::vector<std::vector<ImageTensor>> cells;  // [strength][prefix]
};

// Runs discovery and editing against one model/schedule pair, caching the
// expensive intermediates. Probe results are keyed by (image, timestep,
// regions, rank) so rank sweeps of the joint/individual split reuse them.
class DiscoveryEngine {
  public:
    DiscoveryEngine(const DenoiserModel& model, const NoiseSchedule& schedule,
                    std::uint64_t seed)
        : model_(model), schedule_(schedule), seed_(seed) {
        if (schedule_.eta != 0.0)
            throw std::invalid_argument("DiscoveryEngine: requires a deterministic schedule");
        model_hash_ = model_.param_hash_hex();
    }

    const DenoiserModel& model() const { return model_; }
    const NoiseSchedule& schedule() const { return schedule_; }
    const std::string& model_hash() const { return model_hash_; }

    DiscoveryResult discover(const ImageTensor& x0, const std::string& image_id, int t,
                             const RegionSet& regions, const DiscoveryOptions& opt) {
        if (t < 1 || t > schedule_.T)
            throw std::invalid_argument("discover: analysis timestep must lie in [1, T]");
        const auto n_regions = static_cast<int>(regions.size());
        std::vector<int> indiv = opt.individual_ranks;
        if (indiv.size() == 1) indiv.assign(static_cast<std::size_t>(n_regions), indiv[0]);
        if (static_cast<int>(indiv.size()) != n_regions)
            throw std::invalid_argument("discover: individual rank count must match regions");
        if (opt.rank < 1) throw std::invalid_argument("discover: probe rank must be positive");
        if (opt.joint_rank > n_regions * opt.rank)
            throw std::invalid_argument(
                "discover: infeasible ranks: joint rank exceeds total probe rank");
        for (int ra : indiv)
            if (ra > opt.rank)
                throw std::invalid_argument(
                    "discover: infeasible ranks: individual rank exceeds probe rank");

        DiscoveryResult out;
        out.timestep = t;
        out.model_hash = model_hash_;
        out.image_id = image_id;
        if (n_regions == 1)
            out.warnings.push_back(
                "single region covers the probe: joint/individual split is degenerate");

        const Latent& lat = latent_at(x0, t);
        const std::vector<SubspaceIterationResult>& probes =
            probe_regions(x0, lat, t, regions, opt);
        out.probes = probes;
        out.blocks.reserve(regions.size());
        for (std::size_t i = 0; i < regions.size(); ++i)
            out.blocks.push_back(dimension_reduce(probes[i].factors, regions[i].name));

        if (opt.run_jive) {
            JiveConfig jc;
            jc.joint_rank = opt.joint_rank;
            jc.individual_ranks.assign(indiv.begin(), indiv.end());
            jc.max_iterations = opt.jive_max_iterations;
            jc.tolerance = opt.jive_tolerance;
            out.jive = jive(out.blocks, jc);
            out.jive_ran = true;
            for (const auto& w : out.jive.warnings) out.warnings.push_back(w);

            out.joint_directions = joint_directions(out.jive, opt.joint_rank);
            for (std::size_t i = 0; i < regions.size(); ++i) {
                auto dirs = individual_directions(out.jive, regions[i].name,
                                                  indiv[static_cast<std::size_t>(i)]);
                out.individual_directions.insert(out.individual_directions.end(), dirs.begin(),
                                                 dirs.end());
            }
        } else {
            // Ablation: per-region top right singular vectors of the restricted
            // Jacobian, no joint/individual separation.
            for (std::size_t i = 0; i < regions.size(); ++i) {
                const DenseMatrix& v = probes[i].factors.v;
                const int k = std::min<int>(indiv[i], static_cast<int>(v.cols()));
                for (int j = 0; j < k; ++j) {
                    SemanticDirection d;
                    d.v = v.col(j).normalized();
                    d.component = DirectionComponent::individual;
                    d.region = regions[i].name;
                    d.rank_index = j;
                    out.individual_directions.push_back(std::move(d));
                }
            }
        }

        for (auto& d : out.joint_directions) tag(d, t, image_id);
        for (auto& d : out.individual_directions) tag(d, t, image_id);
        return out;
    }

    // Deterministic reconstruction: invert then regenerate with no edit.
    ImageTensor reconstruct(const ImageTensor& x0) {
        return ddim_generate(invert_cached(x0), model_, schedule_);
    }

    ImageTensor apply_edit(const ImageTensor& x0, const EditRequest& request,
                           std::vector<std::string>* warnings = nullptr) {
        request.validate(schedule_.T);
        check_model_hashes(request, warnings);
        std::vector<Vector> vs;
        vs.reserve(request.directions.size());
        for (const auto& d : request.directions) vs.push_back(d.v);
        const int hi = request.window_hi < 0 ? schedule_.T : request.window_hi;
        const EditInjection inj =
            EditInjection::compose(vs, request.strengths, hi, request.window_lo);
        return ddim_reverse_to(invert_cached(x0), 0, model_, schedule_, &inj);
    }

    // cells[i][j]: strength i applied to the cumulative sum of the first j+1
    // directions. Zero strengths reproduce the plain reconstruction bit for bit.
    DirectionGrid direction_grid(const ImageTensor& x0,
                                 const std::vector<SemanticDirection>& directions,
                                 const std::vector<double>& strengths) {
        if (directions.empty()) throw std::invalid_argument("direction_grid: no directions");
        for (double a : strengths)
            if (!std::isfinite(a)) throw std::invalid_argument("direction_grid: non-finite strength");
        DirectionGrid grid;
        grid.strengths = strengths;
        grid.prefix_count = directions.size();
        const ImageTensor x_T = invert_cached(x0);

        std::vector<Vector> prefix;  // cumulative direction sums
        prefix.reserve(directions.size());
        Vector acc = directions.front().v;
        prefix.push_back(acc);
        for (std::size_t k = 1; k < directions.size(); ++k) {
            if (directions[k].v.size() != acc.size())
                throw std::invalid_argument("direction_grid: direction dimension mismatch");
            acc += directions[k].v;
            prefix.push_back(acc);
        }

        grid.cells.resize(strengths.size());
        for (std::size_t i = 0; i < strengths.size(); ++i) {
            grid.cells[i].reserve(prefix.size());
            for (std::size_t j = 0; j < prefix.size(); ++j) {
                const EditInjection inj = EditInjection::compose(
                    std::vector<Vector>{prefix[j]}, {strengths[i]}, schedule_.T, 0);
                grid.cells[i].push_back(ddim_reverse_to(x_T, 0, model_, schedule_, &inj));
            }
        }
        return grid;
    }

  private:
    struct Latent {
        ImageTensor x_t;
        Vector h;
        DecoderContext ctx;
    };

    void tag(SemanticDirection& d, int t, const std::string& image_id) const {
        d.timestep = t;
        d.source_image_id = image_id;
        d.model_hash = model_hash_;
    }

    void check_model_hashes(const EditRequest& request, std::vector<std::string>* warnings) {
        auto note = [&](const std::string& other) {
            const std::string msg = "edit uses directions discovered on a different model (" +
                                    other + " vs " + model_hash_ + "); applying anyway";
            if (warnings) warnings->push_back(msg);
        };
        if (!request.model_hash.empty() && request.model_hash != model_hash_)
            note(request.model_hash);
        for (const auto& d : request.directions)
            if (!d.model_hash.empty() && d.model_hash != model_hash_ &&
                d.model_hash != request.model_hash)
                note(d.model_hash);
    }

    std::string image_key(const ImageTensor& x0) const {
        return hash_doubles_hex(x0.data.data(), x0.data.size());
    }

    const ImageTensor& invert_cached(const ImageTensor& x0) {
        const std::string key = image_key(x0);
        auto it = inversion_cache_.find(key);
        if (it == inversion_cache_.end())
            it = inversion_cache_.emplace(key, ddim_invert(x0, model_, schedule_)).first;
        return it->second;
    }

    const Latent& latent_at(const ImageTensor& x0, int t) {
        const std::string key = image_key(x0) + "@" + std::to_string(t);
        auto it = latent_cache_.find(key);
        if (it == latent_cache_.end()) {
            const ImageTensor x_t = ddim_reverse_to(invert_cached(x0), t, model_, schedule_);
            DenoiserModel::EncodeResult enc = model_.encode(x_t, t);
            Latent lat{x_t, std::move(enc.h), std::move(enc.ctx)};
            it = latent_cache_.emplace(key, std::move(lat)).first;
        }
        return it->second;
    }

    std::string probe_key(const ImageTensor& x0, int t, const RegionSet& regions,
                          int rank) const {
        Fnv64 f;
        f.update(image_key(x0));
        f.update_pod(t);
        f.update_pod(rank);
        for (std::size_t i = 0; i < regions.size(); ++i) {
            f.update(regions[i].name);
            f.update(regions[i].mask.data(), regions[i].mask.size());
        }
        return f.hex();
    }

    const std::vector<SubspaceIterationResult>& probe_regions(const ImageTensor& x0,
                                                              const Latent& lat, int t,
                                                              const RegionSet& regions,
                                                              const DiscoveryOptions& opt) {
        const std::string key = probe_key(x0, t, regions, opt.rank);
        auto it = probe_cache_.find(key);
        if (it != probe_cache_.end()) return it->second;

        DecoderOperator op(model_, lat.h, lat.ctx);
        std::vector<SubspaceIterationResult> probes;
        probes.reserve(regions.size());
        for (std::size_t i = 0; i < regions.size(); ++i) {
            auto restricted = restrict_to_region(op, regions[i]);
            SubspaceIterationConfig sc;
            sc.rank = opt.rank;
            sc.max_iterations = opt.subspace_max_iterations;
            sc.tolerance = opt.subspace_tolerance;
            sc.seed = seed_for(seed_, "probe:" + regions[i].name);
            probes.push_back(subspace_iteration(restricted, sc));
        }
        return probe_cache_.emplace(key, std::move(probes)).first->second;
    }

    const DenoiserModel& model_;
    NoiseSchedule schedule_;
    std::uint64_t seed_;
    std::string model_hash_;
    std::map<std::string, ImageTensor> inversion_cache_;
    std::map<std::string, Latent> latent_cache_;
    std::map<std::string, std::vector<SubspaceIterationResult>> probe_cache_;
};

// One-shot convenience wrapper around DiscoveryEngine::discover.
inline JiveDecomposition compute_indiv_joint(const DenoiserModel& model,
                                             const NoiseSchedule& schedule,
                                             const ImageTensor& x0, int t,
                                             const RegionSet& regions, int rank, int joint_rank,
                                             int individual_rank, std::uint64_t seed = 0) {
    DiscoveryEngine engine(model, schedule, seed);
    DiscoveryOptions opt;
    opt.rank = rank;
    opt.joint_rank = joint_rank;
    opt.individual_ranks = {individual_rank};
    DiscoveryResult res = engine.discover(x0, "", t, regions, opt);
    return res.jive;
}

inline ImageTensor apply_edit(const DenoiserModel& model, const NoiseSchedule& schedule,
                              const ImageTensor& x0, const EditRequest& request,
                              std::vector<std::string>* warnings = nullptr) {
    DiscoveryEngine engine(model, schedule, /*seed=*/0);
    return engine.apply_edit(x0, request, warnings);
}

}  // namespace hspace
