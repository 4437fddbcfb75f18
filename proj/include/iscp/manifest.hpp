#pragma once

#include <mutex>
#include <string>
#include <vector>

namespace iscp {

std::string sha256_file(const std::string& path);

// Collects every artifact a run writes and emits manifest.json (sorted by
// path) with per-file SHA-256 hashes. add() is safe to call from worker
// threads.
class Manifest {
public:
    explicit Manifest(std::string output_dir) : output_dir_(std::move(output_dir)) {}

    // Registers an already-written file (path relative to output_dir).
    void add(const std::string& relative_path);
    void write() const; // output_dir/manifest.json

private:
    struct Entry {
        std::string path;
        std::string sha256;
        long bytes;
    };
    std::string output_dir_;
    mutable std::mutex mu_;
    std::vector<Entry> entries_;
};

} // namespace iscp
