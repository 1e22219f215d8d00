#pragma once

#include <cmath>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "occmap/error.hpp"

namespace occmap::embedding {

enum class EmbeddingErrc {
  EmptyInput,
  ProviderUnavailable,
  InputTooLong,
  BudgetTokenizerMismatch,
  InvalidVector,
  CacheIo,
  CacheFormat,
};

inline const char* to_string(EmbeddingErrc c) {
  switch (c) {
    case EmbeddingErrc::EmptyInput: return "EmptyInput";
    case EmbeddingErrc::ProviderUnavailable: return "ProviderUnavailable";
    case EmbeddingErrc::InputTooLong: return "InputTooLong";
    case EmbeddingErrc::BudgetTokenizerMismatch: return "BudgetTokenizerMismatch";
    case EmbeddingErrc::InvalidVector: return "InvalidVector";
    case EmbeddingErrc::CacheIo: return "CacheIo";
    case EmbeddingErrc::CacheFormat: return "CacheFormat";
  }
  return "?";
}

using EmbeddingError = CodedError<EmbeddingErrc>;

inline constexpr double kUnitNormTolerance = 1e-6;

// Dense vector tagged with the provider+model that produced it. Values are
// single precision; norms and products accumulate in double.
class EmbeddingVector {
 public:
  EmbeddingVector() = default;
  EmbeddingVector(std::vector<float> values, std::string provider_tag)
      : values_(std::move(values)), provider_tag_(std::move(provider_tag)) {}

  // Scales `raw` to unit length. Throws EmptyInput for a zero vector.
  template <typename T>
  static EmbeddingVector normalized(std::span<const T> raw, std::string provider_tag) {
    double sum_sq = 0.0;
    for (const T x : raw) sum_sq += static_cast<double>(x) * static_cast<double>(x);
    if (!(sum_sq > 0.0) || !std::isfinite(sum_sq)) {
      throw EmbeddingError(EmbeddingErrc::EmptyInput, "cannot normalize a zero or non-finite vector");
    }
    const double inv = 1.0 / std::sqrt(sum_sq);
    std::vector<float> values(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i) values[i] = static_cast<float>(static_cast<double>(raw[i]) * inv);
    return EmbeddingVector(std::move(values), std::move(provider_tag));
  }

  std::span<const float> values() const { return values_; }
  std::size_t dimension() const { return values_.size(); }
  const std::string& provider_tag() const { return provider_tag_; }

  double norm() const {
    double sum_sq = 0.0;
    for (const float x : values_) sum_sq += static_cast<double>(x) * static_cast<double>(x);
    return std::sqrt(sum_sq);
  }

  bool is_unit(double tolerance = kUnitNormTolerance) const { return std::abs(norm() - 1.0) <= tolerance; }

  friend bool operator==(const EmbeddingVector&, const EmbeddingVector&) = default;

 private:
  std::vector<float> values_;
  std::string provider_tag_;
};

}  // namespace occmap::embedding
