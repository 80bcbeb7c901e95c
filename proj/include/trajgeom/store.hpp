#pragma once

// On-disk trajectory bundles: a manifest.json plus one little-endian float32
// tensor file per sequence.
//
//   seq_<id>.bin            "TRJB" u32 version, u32 n_layers, u32 n_tokens,
//                           u32 hidden_dim, then float32 [layer][token][dim]
//   seq_<id>.logits.bin     "TRJL" u32 version, u32 n_tokens, u32 n_tracked,
//                           then float32 [token][tracked]   (only when the
//                           manifest tracks at least one token id)
//   seq_<id>.embedding.bin  TRJB layout with n_layers = 1  (only when
//                           has_embedding_layer is set)
//
// Layer index 0 is the output of the first transformer block; the optional
// embedding row is kept out of the main tensor so it can never become the
// baseline by accident.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "trajgeom/error.hpp"

namespace trajgeom::store {

inline constexpr std::uint32_t kFormatVersion = 1;
inline constexpr std::size_t kTensorHeaderBytes = 20;
inline constexpr std::size_t kLogitHeaderBytes = 16;

enum class Condition {
  kShort,
  kLong,
  kLongRepeat,
  kZeroShot,
  kShotK,
  kRandomControl,
  kNatural,
};

std::string_view to_string(Condition c);
Condition parse_condition(std::string_view text);

enum class SpanLabel {
  kTestWindow,
  kPrefix,
  kQuestion,
  kTransition,
  kChoice,
  kAnswer,
  kShotBoundary,
};

std::string_view to_string(SpanLabel l);
SpanLabel parse_span_label(std::string_view text);

/// Half-open token range [start, end).
struct TokenRange {
  std::size_t start = 0;
  std::size_t end = 0;

  std::size_t size() const { return end > start ? end - start : 0; }
  bool operator==(const TokenRange&) const = default;
};

struct LabeledSpan {
  std::size_t start = 0;
  std::size_t end = 0;
  SpanLabel label = SpanLabel::kTestWindow;

  TokenRange range() const { return {start, end}; }
  bool operator==(const LabeledSpan&) const = default;
};

struct SequenceRecord {
  std::string id;
  std::vector<std::int64_t> token_ids;
  Condition condition = Condition::kNatural;
  std::vector<LabeledSpan> spans;
  /// Task-specific ground truth (test-walk nodes, expected answer, ...).
  nlohmann::json payload = nlohmann::json::object();

  std::optional<LabeledSpan> first_span(SpanLabel label) const;
  bool operator==(const SequenceRecord&) const = default;
};

struct BundleManifest {
  std::uint32_t format_version = kFormatVersion;
  std::string model_id;
  std::uint32_t n_layers_stored = 0;
  std::string layer_semantics = "block_output";
  std::uint32_t hidden_dim = 0;
  std::string tokenizer_id;
  std::vector<SequenceRecord> sequences;
  std::vector<std::int64_t> tracked_token_ids;
  /// Optional word for each tracked id; empty or same length as the ids.
  std::vector<std::string> tracked_token_labels;
  std::uint64_t creation_seed = 0;
  bool has_embedding_layer = false;
  /// Inference precision of the extracting model, e.g. "bfloat16"; free text.
  std::string precision;
  /// Task spec of the suite the bundle was extracted from (null if none).
  nlohmann::json suite;

  bool operator==(const BundleManifest&) const = default;
};

/// Dense float32 tensor laid out [layer][token][dim].
class ActivationTensor {
 public:
  ActivationTensor() = default;
  ActivationTensor(std::size_t n_layers, std::size_t n_tokens,
                   std::size_t hidden_dim);
  ActivationTensor(std::size_t n_layers, std::size_t n_tokens,
                   std::size_t hidden_dim, std::vector<float> data);

  std::size_t n_layers() const { return n_layers_; }
  std::size_t n_tokens() const { return n_tokens_; }
  std::size_t hidden_dim() const { return hidden_dim_; }

  std::span<const float> row(std::size_t layer, std::size_t token) const;
  std::span<float> row(std::size_t layer, std::size_t token);
  std::span<const float> data() const { return data_; }
  std::span<float> data() { return data_; }

  bool operator==(const ActivationTensor&) const = default;

 private:
  std::size_t n_layers_ = 0;
  std::size_t n_tokens_ = 0;
  std::size_t hidden_dim_ = 0;
  std::vector<float> data_;
};

/// Dense float32 matrix laid out [token][tracked].
class LogitMatrix {
 public:
  LogitMatrix() = default;
  LogitMatrix(std::size_t n_tokens, std::size_t n_tracked);
  LogitMatrix(std::size_t n_tokens, std::size_t n_tracked,
              std::vector<float> data);

  std::size_t n_tokens() const { return n_tokens_; }
  std::size_t n_tracked() const { return n_tracked_; }
  bool empty() const { return data_.empty(); }

  float at(std::size_t token, std::size_t column) const {
    return data_[token * n_tracked_ + column];
  }
  float& at(std::size_t token, std::size_t column) {
    return data_[token * n_tracked_ + column];
  }
  std::span<const float> data() const { return data_; }

  bool operator==(const LogitMatrix&) const = default;

 private:
  std::size_t n_tokens_ = 0;
  std::size_t n_tracked_ = 0;
  std::vector<float> data_;
};

/// Tensors for one sequence, parallel to a SequenceRecord.
struct SequenceTensors {
  ActivationTensor activations;
  LogitMatrix logits;
  std::optional<ActivationTensor> embedding;

  bool operator==(const SequenceTensors&) const = default;
};

enum class BundleErrorKind {
  kIo,
  kSchema,
  kMagic,
  kVersion,
  kTruncated,
  kTrailingBytes,
  kShape,
  kSpanRange,
  kNonFinite,
  kDuplicateId,
  kUnknownSequence,
  kInvalidSpan,
};

std::string_view to_string(BundleErrorKind kind);

class BundleError : public Error {
 public:
  BundleError(BundleErrorKind kind, const std::string& message);
  BundleErrorKind kind() const { return kind_; }

 private:
  BundleErrorKind kind_;
};

class TrajectoryBundle {
 public:
  TrajectoryBundle(BundleManifest manifest,
                   std::vector<SequenceTensors> tensors);

  const BundleManifest& manifest() const { return manifest_; }
  std::size_t size() const { return manifest_.sequences.size(); }

  const SequenceRecord& record(std::size_t i) const {
    return manifest_.sequences[i];
  }
  const SequenceTensors& tensors(std::size_t i) const { return tensors_[i]; }

  /// Index of a sequence id; throws BundleError(kUnknownSequence).
  std::size_t index_of(std::string_view id) const;

 private:
  BundleManifest manifest_;
  std::vector<SequenceTensors> tensors_;
};

/// Checks every manifest/tensor invariant; throws BundleError on the first
/// violation.
void validate(const BundleManifest& manifest,
              std::span<const SequenceTensors> tensors);

void write_bundle(const std::filesystem::path& dir,
                  const BundleManifest& manifest,
                  std::span<const SequenceTensors> tensors);

TrajectoryBundle read_bundle(const std::filesystem::path& dir);

/// Copy of tokens [span.start, span.end) at every stored layer.
ActivationTensor slice_window(const TrajectoryBundle& bundle,
                              std::string_view sequence_id, TokenRange span);

nlohmann::json manifest_to_json(const BundleManifest& manifest);
BundleManifest manifest_from_json(const nlohmann::json& doc);

std::filesystem::path tensor_path(const std::filesystem::path& dir,
                                  std::string_view id);
std::filesystem::path logits_path(const std::filesystem::path& dir,
                                  std::string_view id);
std::filesystem::path embedding_path(const std::filesystem::path& dir,
                                     std::string_view id);

}  // namespace trajgeom::store
