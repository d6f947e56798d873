#include "actirisk/hash.hpp"

#include <array>
#include <fstream>

#include <openssl/evp.h>

#include "actirisk/common.hpp"

namespace actirisk {

namespace {

struct DigestCtx {
    EVP_MD_CTX* ctx;
    DigestCtx() : ctx(EVP_MD_CTX_new()) {
        if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1) {
            throw NumericError("sha256: digest init failed");
        }
    }
    ~DigestCtx() { EVP_MD_CTX_free(ctx); }
    std::string finish() {
        std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
        unsigned int len = 0;
        if (EVP_DigestFinal_ex(ctx, md.data(), &len) != 1) {
            throw NumericError("sha256: digest final failed");
        }
        static const char* hex = "0123456789abcdef";
        std::string out;
        out.reserve(2 * len);
        for (unsigned int i = 0; i < len; ++i) {
            out.push_back(hex[md[i] >> 4]);
            out.push_back(hex[md[i] & 0xf]);
        }
        return out;
    }
};

} // namespace

std::string sha256_hex(const std::string& bytes) {
    DigestCtx d;
    if (EVP_DigestUpdate(d.ctx, bytes.data(), bytes.size()) != 1) {
        throw NumericError("sha256: update failed");
    }
    return d.finish();
}

std::string sha256_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("sha256: cannot open " + path.string());
    DigestCtx d;
    std::array<char, 1 << 16> buf;
    while (in) {
        in.read(buf.data(), buf.size());
        const std::streamsize got = in.gcount();
        if (got > 0 && EVP_DigestUpdate(d.ctx, buf.data(), static_cast<size_t>(got)) != 1) {
            throw NumericError("sha256: update failed");
        }
    }
    return d.finish();
}

} // namespace actirisk
