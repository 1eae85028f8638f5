#include "memex/embedding.hpp"

#include <cmath>
#include <cstdint>
#include <stdexcept>

#include <openssl/evp.h>

#include "memex/text.hpp"

namespace memex {

EmbeddingVector hash_embed(const std::string& input, int dim) {
    EmbeddingVector acc(static_cast<size_t>(dim), 0.0);
    for (const auto& token : text::tokenize(input)) {
        unsigned char digest[EVP_MAX_MD_SIZE];
        unsigned int len = 0;
        EVP_Digest(token.data(), token.size(), digest, &len, EVP_sha256(), nullptr);
        std::uint32_t idx = (static_cast<std::uint32_t>(digest[0]) << 24) |
                            (static_cast<std::uint32_t>(digest[1]) << 16) |
                            (static_cast<std::uint32_t>(digest[2]) << 8) |
                            static_cast<std::uint32_t>(digest[3]);
        double sign = (digest[4] % 2 == 0) ? 1.0 : -1.0;
        acc[idx % static_cast<std::uint32_t>(dim)] += sign;
    }
    double norm2 = 0.0;
    for (double v : acc) norm2 += v * v;
    if (norm2 > 0.0) {
        double norm = std::sqrt(norm2);
        for (double& v : acc) v /= norm;
    }
    return acc;
}

std::vector<EmbeddingVector> HashingEmbedder::embed(const std::vector<std::string>& texts) {
    std::vector<EmbeddingVector> out;
    out.reserve(texts.size());
    for (const auto& t : texts) out.push_back(hash_embed(t, dim_));
    return out;
}

bool is_zero_vector(const EmbeddingVector& v) {
    for (double x : v) {
        if (x != 0.0) return false;
    }
    return true;
}

double cosine(const EmbeddingVector& a, const EmbeddingVector& b) {
    if (a.size() != b.size()) throw std::invalid_argument("cosine: dimension mismatch");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

std::vector<EmbeddingVector> embed_batch(const std::vector<std::string>& texts,
                                         Embedder& backend, int batch_size,
                                         int max_retries) {
    if (batch_size <= 0) throw std::invalid_argument("embed_batch: batch_size must be > 0");
    std::vector<EmbeddingVector> out;
    out.reserve(texts.size());
    size_t batch_index = 0;
    for (size_t start = 0; start < texts.size(); start += batch_size, ++batch_index) {
        size_t end = std::min(texts.size(), start + static_cast<size_t>(batch_size));
        std::vector<std::string> chunk(texts.begin() + start, texts.begin() + end);
        int attempt = 0;
        while (true) {
            try {
                auto vecs = backend.embed(chunk);
                if (vecs.size() != chunk.size())
                    throw std::runtime_error("backend returned wrong vector count");
                for (auto& v : vecs) out.push_back(std::move(v));
                break;
            } catch (const std::exception& e) {
                if (attempt >= max_retries) {
                    throw std::runtime_error("embed_batch: batch " + std::to_string(batch_index) +
                                             " failed after " + std::to_string(attempt) +
                                             " retries: " + e.what());
                }
                ++attempt;
            }
        }
    }
    return out;
}

}  // namespace memex
