#include "iscp/manifest.hpp"

#include <openssl/evp.h>

#include <nlohmann/json.hpp>

#include <algorithm>
#include <fstream>
#include <stdexcept>

namespace iscp {

std::string sha256_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error(path + ": cannot open for hashing");
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1) {
        EVP_MD_CTX_free(ctx);
        throw std::runtime_error("sha256 init failed");
    }
    char buf[1 << 16];
    while (in) {
        in.read(buf, sizeof(buf));
        if (in.gcount() > 0) EVP_DigestUpdate(ctx, buf, static_cast<size_t>(in.gcount()));
    }
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx, digest, &len);
    EVP_MD_CTX_free(ctx);
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[digest[i] >> 4]);
        out.push_back(hex[digest[i] & 0xf]);
    }
    return out;
}

void Manifest::add(const std::string& relative_path) {
    const std::string full = output_dir_ + "/" + relative_path;
    std::ifstream probe(full, std::ios::binary | std::ios::ate);
    if (!probe) throw std::runtime_error(full + ": manifest entry does not exist");
    const long bytes = static_cast<long>(probe.tellg());
    probe.close();
    const std::string hash = sha256_file(full);
    std::lock_guard<std::mutex> lock(mu_);
    entries_.push_back({relative_path, hash, bytes});
}

void Manifest::write() const {
    std::lock_guard<std::mutex> lock(mu_);
    std::vector<Entry> sorted = entries_;
    std::sort(sorted.begin(), sorted.end(),
              [](const Entry& a, const Entry& b) { return a.path < b.path; });
    nlohmann::json arr = nlohmann::json::array();
    for (const Entry& e : sorted) {
        nlohmann::json j;
        j["path"] = e.path;
        j["sha256"] = e.sha256;
        j["bytes"] = e.bytes;
        arr.push_back(j);
    }
    nlohmann::json root;
    root["files"] = arr;
    std::ofstream out(output_dir_ + "/manifest.json", std::ios::binary);
    if (!out) throw std::runtime_error(output_dir_ + "/manifest.json: cannot open");
    out << root.dump(2) << "\n";
}

} // namespace iscp
