// Command-line entry point. Subcommands mirror the library commands
// one-to-one; a JSON config file carries the full experiment description and
// flags override individual values. The resolved configuration is echoed
// before the run and recorded in the output manifest.

#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "hspace/cli/commands.hpp"
#include "hspace/cli/config.hpp"
#include "hspace/core/version.hpp"

namespace {

struct CommonFlags {
    std::string config;
    std::string out;
    std::uint64_t seed = 0;
};

void add_common(CLI::App* sub, CommonFlags& f) {
    sub->add_option("--config", f.config, "JSON config file (or a manifest.json to re-run)")
        ->check(CLI::ExistingFile);
    sub->add_option("--seed", f.seed, "root seed; subsystems derive their own streams from it");
    sub->add_option("--out", f.out, "output directory for results and the run manifest");
}

hspace::cli::ExperimentConfig load_config(const CLI::App* sub, const CommonFlags& f) {
    hspace::cli::ExperimentConfig cfg;
    if (!f.config.empty()) cfg = hspace::cli::ExperimentConfig::load(f.config);
    if (sub->count("--seed")) cfg.seed = f.seed;
    if (sub->count("--out")) cfg.out = f.out;
    return cfg;
}

// "name:x0,y0,x1,y1"
hspace::cli::RegionSpec parse_region_flag(const std::string& text) {
    const auto colon = text.find(':');
    if (colon == std::string::npos || colon == 0)
        throw CLI::ValidationError("--region", "expected name:x0,y0,x1,y1, got '" + text + "'");
    hspace::cli::RegionSpec spec;
    spec.name = text.substr(0, colon);
    std::string rest = text.substr(colon + 1);
    std::vector<int> nums;
    std::string cur;
    for (char ch : rest + ",") {
        if (ch == ',') {
            if (cur.empty())
                throw CLI::ValidationError("--region", "bad rectangle in '" + text + "'");
            try {
                nums.push_back(std::stoi(cur));
            } catch (const std::exception&) {
                throw CLI::ValidationError("--region", "bad coordinate '" + cur + "'");
            }
            cur.clear();
        } else {
            cur.push_back(ch);
        }
    }
    if (nums.size() != 4)
        throw CLI::ValidationError("--region", "expected four coordinates in '" + text + "'");
    spec.has_rect = true;
    std::copy(nums.begin(), nums.end(), spec.rect.begin());
    return spec;
}

int run(const std::string& verb, hspace::cli::ExperimentConfig& cfg) {
    cfg.validate();
    if (cfg.out.empty())
        throw hspace::cli::ConfigError("no output directory: pass --out or set 'out' in the config");
    std::cout << "resolved configuration:\n" << cfg.to_json().dump(2) << "\n";

    hspace::io::RunManifest m;
    if (verb == "synth-data") m = hspace::cli::cmd_synth_data(cfg, cfg.out);
    else if (verb == "train") m = hspace::cli::cmd_train(cfg, cfg.out);
    else if (verb == "invert") m = hspace::cli::cmd_invert(cfg, cfg.out);
    else if (verb == "discover") m = hspace::cli::cmd_discover(cfg, cfg.out);
    else if (verb == "edit") m = hspace::cli::cmd_edit(cfg, cfg.out);
    else if (verb == "eval") m = hspace::cli::cmd_eval(cfg, cfg.out);
    else throw std::logic_error("unhandled verb " + verb);

    for (const auto& w : m.warnings) std::cerr << "warning: " << w << "\n";
    std::cout << verb << ": wrote " << m.outputs.size() << " file(s) to " << cfg.out << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"region-localized semantic direction toolkit for a toy denoising model"};
    app.set_version_flag("--version", std::string(hspace::kToolkitVersion));
    app.require_subcommand(1);

    CommonFlags synth_f, train_f, invert_f, discover_f, edit_f, eval_f;

    auto* synth = app.add_subcommand("synth-data", "render a synthetic face-schematic dataset");
    add_common(synth, synth_f);
    int synth_count = -1;
    synth->add_option("--count", synth_count, "number of images");

    auto* train = app.add_subcommand("train", "train the toy denoiser on a dataset");
    add_common(train, train_f);
    std::string train_dataset, train_resume;
    int train_steps = -1;
    train->add_option("--dataset", train_dataset, "dataset directory");
    train->add_option("--resume", train_resume, "checkpoint directory to continue from");
    train->add_option("--steps", train_steps, "total optimization steps");

    auto* invert = app.add_subcommand("invert", "deterministically invert an image and report the round trip");
    add_common(invert, invert_f);
    std::string inv_dataset, inv_checkpoint;
    int inv_image = -1;
    invert->add_option("--dataset", inv_dataset, "dataset directory");
    invert->add_option("--checkpoint", inv_checkpoint, "model checkpoint directory");
    invert->add_option("--image", inv_image, "dataset image index");

    auto* discover = app.add_subcommand("discover", "find joint/individual bottleneck directions");
    add_common(discover, discover_f);
    std::string disc_dataset, disc_checkpoint;
    int disc_image = -1;
    std::vector<std::string> disc_regions;
    std::string disc_rest;
    bool disc_no_jive = false, disc_allow_partial = false;
    double disc_tfrac = -1.0;
    discover->add_option("--dataset", disc_dataset, "dataset directory");
    discover->add_option("--checkpoint", disc_checkpoint, "model checkpoint directory");
    discover->add_option("--image", disc_image, "dataset image index to analyze");
    discover->add_option("--region", disc_regions,
                         "region rectangle as name:x0,y0,x1,y1 (repeatable)");
    discover->add_option("--region-rest", disc_rest,
                         "add a region named REST covering everything the other regions do not");
    discover->add_flag("--no-jive", disc_no_jive,
                       "skip the joint/individual split; keep raw per-region directions");
    discover->add_flag("--allow-partial", disc_allow_partial,
                       "allow regions that do not cover the whole image");
    discover->add_option("--timestep-frac", disc_tfrac,
                         "analysis timestep as a fraction of T (default 0.6)");

    auto* edit = app.add_subcommand("edit", "apply archived directions to images");
    add_common(edit, edit_f);
    std::string edit_dataset, edit_checkpoint, edit_archive;
    std::vector<std::string> edit_dirs;
    std::vector<double> edit_strengths;
    std::vector<int> edit_images;
    bool edit_grid = false;
    edit->add_option("--dataset", edit_dataset, "dataset directory");
    edit->add_option("--checkpoint", edit_checkpoint, "model checkpoint directory");
    edit->add_option("--archive", edit_archive, "direction archive directory");
    edit->add_option("--direction", edit_dirs,
                     "direction selector joint:K or individual:REGION:K (repeatable)");
    edit->add_option("--strength", edit_strengths, "edit strength (repeatable)");
    edit->add_option("--image", edit_images, "dataset image index (repeatable)");
    edit->add_flag("--grid", edit_grid, "render the strength x cumulative-direction grid");

    auto* eval = app.add_subcommand("eval", "score archived directions: localization and factors");
    add_common(eval, eval_f);
    std::string eval_dataset, eval_checkpoint;
    std::vector<std::string> eval_archives;
    int eval_count = -1;
    double eval_strength = 0.0;
    eval->add_option("--dataset", eval_dataset, "dataset directory");
    eval->add_option("--checkpoint", eval_checkpoint, "model checkpoint directory");
    eval->add_option("--archive", eval_archives, "direction archive directory (repeatable)");
    eval->add_option("--images", eval_count, "number of leading dataset images to use");
    eval->add_option("--strength", eval_strength, "edit strength used for scoring");

    CLI11_PARSE(app, argc, argv);

    try {
        if (synth->parsed()) {
            auto cfg = load_config(synth, synth_f);
            if (synth->count("--count")) cfg.data.count = synth_count;
            return run("synth-data", cfg);
        }
        if (train->parsed()) {
            auto cfg = load_config(train, train_f);
            if (!train_dataset.empty()) cfg.train.dataset = train_dataset;
            if (!train_resume.empty()) cfg.train.resume = train_resume;
            if (train->count("--steps")) cfg.train.steps = train_steps;
            return run("train", cfg);
        }
        if (invert->parsed()) {
            auto cfg = load_config(invert, invert_f);
            if (!inv_dataset.empty()) cfg.discovery.dataset = inv_dataset;
            if (!inv_checkpoint.empty()) cfg.discovery.checkpoint = inv_checkpoint;
            if (invert->count("--image")) cfg.discovery.image_index = inv_image;
            return run("invert", cfg);
        }
        if (discover->parsed()) {
            auto cfg = load_config(discover, discover_f);
            if (!disc_dataset.empty()) cfg.discovery.dataset = disc_dataset;
            if (!disc_checkpoint.empty()) cfg.discovery.checkpoint = disc_checkpoint;
            if (discover->count("--image")) cfg.discovery.image_index = disc_image;
            if (!disc_regions.empty()) {
                cfg.discovery.regions.clear();
                for (const auto& r : disc_regions)
                    cfg.discovery.regions.push_back(parse_region_flag(r));
            }
            if (!disc_rest.empty()) {
                hspace::cli::RegionSpec rest;
                rest.name = disc_rest;
                rest.is_rest = true;
                cfg.discovery.regions.push_back(rest);
            }
            if (disc_no_jive) cfg.discovery.no_jive = true;
            if (disc_allow_partial) cfg.discovery.allow_partial = true;
            if (discover->count("--timestep-frac")) cfg.discovery.timestep_frac = disc_tfrac;
            return run("discover", cfg);
        }
        if (edit->parsed()) {
            auto cfg = load_config(edit, edit_f);
            if (!edit_dataset.empty()) cfg.edit.dataset = edit_dataset;
            if (!edit_checkpoint.empty()) cfg.edit.checkpoint = edit_checkpoint;
            if (!edit_archive.empty()) cfg.edit.archive = edit_archive;
            if (!edit_dirs.empty()) cfg.edit.directions = edit_dirs;
            if (!edit_strengths.empty()) cfg.edit.strengths = edit_strengths;
            if (!edit_images.empty()) cfg.edit.images = edit_images;
            if (edit_grid) cfg.edit.grid = true;
            return run("edit", cfg);
        }
        if (eval->parsed()) {
            auto cfg = load_config(eval, eval_f);
            if (!eval_dataset.empty()) cfg.eval.dataset = eval_dataset;
            if (!eval_checkpoint.empty()) cfg.eval.checkpoint = eval_checkpoint;
            if (!eval_archives.empty()) cfg.eval.archives = eval_archives;
            if (eval->count("--images")) cfg.eval.image_count = eval_count;
            if (eval->count("--strength")) cfg.eval.strength = eval_strength;
            return run("eval", cfg);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
