#pragma once

// Run manifests and output-directory locking. Every command writes a
// manifest.json into its output directory recording the resolved
// configuration (with its hash), the hashes of all inputs, the seed, and the
// produced files — enough to re-run the command and reproduce the outputs.

#include <fcntl.h>
#include <unistd.h>

#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "hspace/core/hash.hpp"
#include "hspace/core/version.hpp"
#include "hspace/io/checkpoint.hpp"

namespace hspace::io {

struct RunManifest {
    std::string command;
    std::uint64_t seed = 0;
    nlohmann::json config;                       // fully resolved configuration
    std::map<std::string, std::string> inputs;   // logical name -> content hash
    std::vector<std::string> outputs;            // paths relative to the run dir
    std::vector<std::string> warnings;
};

inline nlohmann::json manifest_to_json(const RunManifest& m) {
    nlohmann::json j;
    j["manifest_version"] = 1;
    j["toolkit_version"] = kToolkitVersion;
    j["command"] = m.command;
    j["seed"] = m.seed;
    j["config"] = m.config;
    j["config_hash"] = hash_string_hex(m.config.dump());
    j["inputs"] = m.inputs;
    j["outputs"] = m.outputs;
    j["warnings"] = m.warnings;
    return j;
}

inline void write_run_manifest(const std::string& dir, const RunManifest& m) {
    std::filesystem::create_directories(dir);
    write_json_file(dir + "/manifest.json", manifest_to_json(m));
}

// Exclusive advisory lock on an output directory: refuses to start while
// another writer holds the lock, and releases it on scope exit.
class DirectoryLock {
  public:
    explicit DirectoryLock(const std::string& dir) : path_(dir + "/.lock") {
        std::filesystem::create_directories(dir);
        const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
        if (fd < 0)
            throw std::runtime_error("output directory is locked by another process (found " +
                                     path_ + "); remove the stale lock if no run is active");
        ::close(fd);
    }
    DirectoryLock(const DirectoryLock&) = delete;
    DirectoryLock& operator=(const DirectoryLock&) = delete;
    ~DirectoryLock() {
        std::error_code ec;
        std::filesystem::remove(path_, ec);
    }

  private:
    std::string path_;
};

}  // namespace hspace::io
