#pragma once

#include <memory>
#include <string>
#include <vector>

namespace memex {

using EmbeddingVector = std::vector<double>;

/// Pluggable dense-embedding backend.
class Embedder {
  public:
    virtual ~Embedder() = default;
    virtual std::string name() const = 0;
    virtual int dim() const = 0;
    virtual std::vector<EmbeddingVector> embed(const std::vector<std::string>& texts) = 0;
};

/// Deterministic SHA-256 feature-hashing embedder. Tokens map to a dimension
/// via the first 4 digest bytes (big-endian, mod d) and a sign via the parity
/// of digest byte 4; accumulated counts are l2-normalized.
class HashingEmbedder : public Embedder {
  public:
    explicit HashingEmbedder(int dim = 64) : dim_(dim) {}
    std::string name() const override { return "hashing-sha256"; }
    int dim() const override { return dim_; }
    std::vector<EmbeddingVector> embed(const std::vector<std::string>& texts) override;

  private:
    int dim_;
};

EmbeddingVector hash_embed(const std::string& text, int dim = 64);

/// Standard cosine; 0 when either vector is all-zero. Throws on dim mismatch.
double cosine(const EmbeddingVector& a, const EmbeddingVector& b);

bool is_zero_vector(const EmbeddingVector& v);

/// Chunks `texts` into batches of `batch_size` and delegates to the backend,
/// preserving order. Each batch is retried up to `max_retries` times; a batch
/// that still fails raises with the batch index and retry count.
std::vector<EmbeddingVector> embed_batch(const std::vector<std::string>& texts,
                                         Embedder& backend, int batch_size = 32,
                                         int max_retries = 2);

}  // namespace memex
