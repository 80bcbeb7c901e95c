#include "trajgeom/store.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_set>

namespace trajgeom::store {

namespace {

constexpr std::array<char, 4> kTensorMagic = {'T', 'R', 'J', 'B'};
constexpr std::array<char, 4> kLogitMagic = {'T', 'R', 'J', 'L'};

struct ConditionName {
  Condition value;
  std::string_view name;
};

constexpr std::array<ConditionName, 7> kConditionNames = {{
    {Condition::kShort, "short"},
    {Condition::kLong, "long"},
    {Condition::kLongRepeat, "long-repeat"},
    {Condition::kZeroShot, "zero-shot"},
    {Condition::kShotK, "shot-k"},
    {Condition::kRandomControl, "random-control"},
    {Condition::kNatural, "natural"},
}};

struct LabelName {
  SpanLabel value;
  std::string_view name;
};

constexpr std::array<LabelName, 7> kLabelNames = {{
    {SpanLabel::kTestWindow, "test-window"},
    {SpanLabel::kPrefix, "prefix"},
    {SpanLabel::kQuestion, "question"},
    {SpanLabel::kTransition, "transition"},
    {SpanLabel::kChoice, "choice"},
    {SpanLabel::kAnswer, "answer"},
    {SpanLabel::kShotBoundary, "shot-boundary"},
}};

[[noreturn]] void fail(BundleErrorKind kind, const std::string& message) {
  throw BundleError(kind, message);
}

bool valid_id(std::string_view id) {
  if (id.empty()) {
    return false;
  }
  return std::all_of(id.begin(), id.end(), [](char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
           (c >= '0' && c <= '9') || c == '_' || c == '-' || c == '.';
  });
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) {
    out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFU));
  }
}

std::uint32_t get_u32(const std::string& in, std::size_t offset) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) {
    v |= static_cast<std::uint32_t>(
             static_cast<unsigned char>(in[offset + i]))
         << (8 * i);
  }
  return v;
}

void put_floats(std::string& out, std::span<const float> values) {
  out.reserve(out.size() + values.size() * 4);
  for (float f : values) {
    put_u32(out, std::bit_cast<std::uint32_t>(f));
  }
}

std::vector<float> get_floats(const std::string& in, std::size_t offset,
                              std::size_t count) {
  std::vector<float> values(count);
  for (std::size_t i = 0; i < count; ++i) {
    values[i] = std::bit_cast<float>(get_u32(in, offset + 4 * i));
  }
  return values;
}

std::uint32_t checked_u32(std::size_t v, std::string_view what) {
  if (v > 0xFFFFFFFFULL) {
    fail(BundleErrorKind::kShape, std::string(what) + " exceeds 32 bits");
  }
  return static_cast<std::uint32_t>(v);
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    fail(BundleErrorKind::kIo, "cannot open " + path.string() + " for writing");
  }
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) {
    fail(BundleErrorKind::kIo, "write failed: " + path.string());
  }
}

std::string read_file(const std::filesystem::path& path,
                      std::string_view sequence_id) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    fail(BundleErrorKind::kIo, "sequence '" + std::string(sequence_id) +
                                   "': cannot open " + path.string());
  }
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

std::string encode_tensor(const ActivationTensor& t) {
  std::string out(kTensorMagic.begin(), kTensorMagic.end());
  put_u32(out, kFormatVersion);
  put_u32(out, checked_u32(t.n_layers(), "n_layers"));
  put_u32(out, checked_u32(t.n_tokens(), "n_tokens"));
  put_u32(out, checked_u32(t.hidden_dim(), "hidden_dim"));
  put_floats(out, t.data());
  return out;
}

std::string encode_logits(const LogitMatrix& m) {
  std::string out(kLogitMagic.begin(), kLogitMagic.end());
  put_u32(out, kFormatVersion);
  put_u32(out, checked_u32(m.n_tokens(), "n_tokens"));
  put_u32(out, checked_u32(m.n_tracked(), "n_tracked"));
  put_floats(out, m.data());
  return out;
}

void check_header(const std::string& bytes, std::size_t header_size,
                  const std::array<char, 4>& magic, std::string_view id,
                  std::string_view what) {
  const std::string who =
      "sequence '" + std::string(id) + "' " + std::string(what);
  if (bytes.size() < 4 || !std::equal(magic.begin(), magic.end(), bytes.begin())) {
    if (bytes.size() < 4) {
      fail(BundleErrorKind::kTruncated, who + ": file shorter than magic");
    }
    fail(BundleErrorKind::kMagic, who + ": bad magic bytes");
  }
  if (bytes.size() < header_size) {
    fail(BundleErrorKind::kTruncated, who + ": truncated header");
  }
  const std::uint32_t version = get_u32(bytes, 4);
  if (version != kFormatVersion) {
    fail(BundleErrorKind::kVersion,
         who + ": unsupported version " + std::to_string(version));
  }
}

void check_payload_size(const std::string& bytes, std::size_t header_size,
                        std::size_t count, std::string_view id,
                        std::string_view what) {
  const std::size_t expected = header_size + 4 * count;
  const std::string who =
      "sequence '" + std::string(id) + "' " + std::string(what);
  if (bytes.size() < expected) {
    fail(BundleErrorKind::kTruncated,
         who + ": truncated, expected " + std::to_string(expected) +
             " bytes, found " + std::to_string(bytes.size()));
  }
  if (bytes.size() > expected) {
    fail(BundleErrorKind::kTrailingBytes,
         who + ": " + std::to_string(bytes.size() - expected) +
             " trailing bytes");
  }
}

ActivationTensor decode_tensor(const std::string& bytes, std::string_view id,
                               std::string_view what) {
  check_header(bytes, kTensorHeaderBytes, kTensorMagic, id, what);
  const std::size_t layers = get_u32(bytes, 8);
  const std::size_t tokens = get_u32(bytes, 12);
  const std::size_t dim = get_u32(bytes, 16);
  const std::size_t count = layers * tokens * dim;
  check_payload_size(bytes, kTensorHeaderBytes, count, id, what);
  return ActivationTensor(layers, tokens, dim,
                          get_floats(bytes, kTensorHeaderBytes, count));
}

LogitMatrix decode_logits(const std::string& bytes, std::string_view id) {
  check_header(bytes, kLogitHeaderBytes, kLogitMagic, id, "logits");
  const std::size_t tokens = get_u32(bytes, 8);
  const std::size_t tracked = get_u32(bytes, 12);
  const std::size_t count = tokens * tracked;
  check_payload_size(bytes, kLogitHeaderBytes, count, id, "logits");
  return LogitMatrix(tokens, tracked,
                     get_floats(bytes, kLogitHeaderBytes, count));
}

template <typename T>
T required(const nlohmann::json& doc, const char* key) {
  if (!doc.contains(key)) {
    fail(BundleErrorKind::kSchema, std::string("manifest missing field '") +
                                       key + "'");
  }
  try {
    return doc.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    fail(BundleErrorKind::kSchema,
         std::string("manifest field '") + key + "': " + e.what());
  }
}

std::string shape_string(std::size_t a, std::size_t b, std::size_t c) {
  return "(" + std::to_string(a) + " x " + std::to_string(b) + " x " +
         std::to_string(c) + ")";
}

void check_finite(std::span<const float> values, std::string_view id,
                  std::string_view what) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      fail(BundleErrorKind::kNonFinite,
           "sequence '" + std::string(id) + "' " + std::string(what) +
               ": non-finite value at flat index " + std::to_string(i));
    }
  }
}

}  // namespace

std::string_view to_string(Condition c) {
  for (const auto& entry : kConditionNames) {
    if (entry.value == c) {
      return entry.name;
    }
  }
  return "unknown";
}

Condition parse_condition(std::string_view text) {
  for (const auto& entry : kConditionNames) {
    if (entry.name == text) {
      return entry.value;
    }
  }
  throw ParseError("unknown condition '" + std::string(text) + "'");
}

std::string_view to_string(SpanLabel l) {
  for (const auto& entry : kLabelNames) {
    if (entry.value == l) {
      return entry.name;
    }
  }
  return "unknown";
}

SpanLabel parse_span_label(std::string_view text) {
  for (const auto& entry : kLabelNames) {
    if (entry.name == text) {
      return entry.value;
    }
  }
  throw ParseError("unknown span label '" + std::string(text) + "'");
}

std::string_view to_string(BundleErrorKind kind) {
  switch (kind) {
    case BundleErrorKind::kIo: return "io";
    case BundleErrorKind::kSchema: return "schema";
    case BundleErrorKind::kMagic: return "magic";
    case BundleErrorKind::kVersion: return "version";
    case BundleErrorKind::kTruncated: return "truncated";
    case BundleErrorKind::kTrailingBytes: return "trailing-bytes";
    case BundleErrorKind::kShape: return "shape";
    case BundleErrorKind::kSpanRange: return "span-range";
    case BundleErrorKind::kNonFinite: return "non-finite";
    case BundleErrorKind::kDuplicateId: return "duplicate-id";
    case BundleErrorKind::kUnknownSequence: return "unknown-sequence";
    case BundleErrorKind::kInvalidSpan: return "invalid-span";
  }
  return "unknown";
}

BundleError::BundleError(BundleErrorKind kind, const std::string& message)
    : Error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

std::optional<LabeledSpan> SequenceRecord::first_span(SpanLabel label) const {
  for (const auto& span : spans) {
    if (span.label == label) {
      return span;
    }
  }
  return std::nullopt;
}

ActivationTensor::ActivationTensor(std::size_t n_layers, std::size_t n_tokens,
                                   std::size_t hidden_dim)
    : n_layers_(n_layers),
      n_tokens_(n_tokens),
      hidden_dim_(hidden_dim),
      data_(n_layers * n_tokens * hidden_dim, 0.0F) {}

ActivationTensor::ActivationTensor(std::size_t n_layers, std::size_t n_tokens,
                                   std::size_t hidden_dim,
                                   std::vector<float> data)
    : n_layers_(n_layers),
      n_tokens_(n_tokens),
      hidden_dim_(hidden_dim),
      data_(std::move(data)) {
  if (data_.size() != n_layers * n_tokens * hidden_dim) {
    throw BundleError(BundleErrorKind::kShape,
                      "tensor data size does not match " +
                          shape_string(n_layers, n_tokens, hidden_dim));
  }
}

std::span<const float> ActivationTensor::row(std::size_t layer,
                                             std::size_t token) const {
  return std::span<const float>(data_).subspan(
      (layer * n_tokens_ + token) * hidden_dim_, hidden_dim_);
}

std::span<float> ActivationTensor::row(std::size_t layer, std::size_t token) {
  return std::span<float>(data_).subspan(
      (layer * n_tokens_ + token) * hidden_dim_, hidden_dim_);
}

LogitMatrix::LogitMatrix(std::size_t n_tokens, std::size_t n_tracked)
    : n_tokens_(n_tokens),
      n_tracked_(n_tracked),
      data_(n_tokens * n_tracked, 0.0F) {}

LogitMatrix::LogitMatrix(std::size_t n_tokens, std::size_t n_tracked,
                         std::vector<float> data)
    : n_tokens_(n_tokens), n_tracked_(n_tracked), data_(std::move(data)) {
  if (data_.size() != n_tokens * n_tracked) {
    throw BundleError(BundleErrorKind::kShape,
                      "logit data size does not match shape");
  }
}

TrajectoryBundle::TrajectoryBundle(BundleManifest manifest,
                                   std::vector<SequenceTensors> tensors)
    : manifest_(std::move(manifest)), tensors_(std::move(tensors)) {
  validate(manifest_, tensors_);
}

std::size_t TrajectoryBundle::index_of(std::string_view id) const {
  for (std::size_t i = 0; i < manifest_.sequences.size(); ++i) {
    if (manifest_.sequences[i].id == id) {
      return i;
    }
  }
  fail(BundleErrorKind::kUnknownSequence,
       "no sequence '" + std::string(id) + "' in bundle");
}

void validate(const BundleManifest& m,
              std::span<const SequenceTensors> tensors) {
  if (m.format_version != kFormatVersion) {
    fail(BundleErrorKind::kVersion,
         "manifest format_version " + std::to_string(m.format_version) +
             " is not supported");
  }
  if (m.n_layers_stored < 2) {
    fail(BundleErrorKind::kSchema,
         "n_layers_stored must be at least 2 (baseline + comparison)");
  }
  if (m.hidden_dim == 0) {
    fail(BundleErrorKind::kSchema, "hidden_dim must be positive");
  }
  if (!m.tracked_token_labels.empty() &&
      m.tracked_token_labels.size() != m.tracked_token_ids.size()) {
    fail(BundleErrorKind::kSchema,
         "tracked_token_labels must be empty or match tracked_token_ids");
  }
  if (tensors.size() != m.sequences.size()) {
    fail(BundleErrorKind::kShape,
         std::to_string(m.sequences.size()) + " sequences declared but " +
             std::to_string(tensors.size()) + " tensor sets given");
  }

  std::unordered_set<std::string> seen;
  for (std::size_t i = 0; i < m.sequences.size(); ++i) {
    const SequenceRecord& seq = m.sequences[i];
    if (!valid_id(seq.id)) {
      fail(BundleErrorKind::kSchema,
           "sequence id '" + seq.id + "' must be nonempty [A-Za-z0-9._-]");
    }
    if (!seen.insert(seq.id).second) {
      fail(BundleErrorKind::kDuplicateId, "duplicate sequence id '" + seq.id + "'");
    }
    if (seq.token_ids.empty()) {
      fail(BundleErrorKind::kSchema, "sequence '" + seq.id + "' has no tokens");
    }
    const std::size_t n_tokens = seq.token_ids.size();
    for (const auto& span : seq.spans) {
      if (span.start >= span.end) {
        fail(BundleErrorKind::kInvalidSpan,
             "sequence '" + seq.id + "': empty span [" +
                 std::to_string(span.start) + "," + std::to_string(span.end) +
                 ")");
      }
      if (span.end > n_tokens) {
        fail(BundleErrorKind::kSpanRange,
             "sequence '" + seq.id + "': span [" + std::to_string(span.start) +
                 "," + std::to_string(span.end) + ") exceeds " +
                 std::to_string(n_tokens) + " tokens");
      }
    }

    const SequenceTensors& t = tensors[i];
    const auto& act = t.activations;
    if (act.n_layers() != m.n_layers_stored || act.n_tokens() != n_tokens ||
        act.hidden_dim() != m.hidden_dim) {
      fail(BundleErrorKind::kShape,
           "sequence '" + seq.id + "': activation shape " +
               shape_string(act.n_layers(), act.n_tokens(), act.hidden_dim()) +
               " != declared " +
               shape_string(m.n_layers_stored, n_tokens, m.hidden_dim));
    }
    check_finite(act.data(), seq.id, "activations");

    if (m.tracked_token_ids.empty()) {
      if (!t.logits.empty()) {
        fail(BundleErrorKind::kShape,
             "sequence '" + seq.id + "': logits given but no tracked tokens");
      }
    } else {
      if (t.logits.n_tokens() != n_tokens ||
          t.logits.n_tracked() != m.tracked_token_ids.size()) {
        fail(BundleErrorKind::kShape,
             "sequence '" + seq.id + "': logit shape (" +
                 std::to_string(t.logits.n_tokens()) + " x " +
                 std::to_string(t.logits.n_tracked()) + ") != (" +
                 std::to_string(n_tokens) + " x " +
                 std::to_string(m.tracked_token_ids.size()) + ")");
      }
      check_finite(t.logits.data(), seq.id, "logits");
    }

    if (m.has_embedding_layer) {
      if (!t.embedding || t.embedding->n_layers() != 1 ||
          t.embedding->n_tokens() != n_tokens ||
          t.embedding->hidden_dim() != m.hidden_dim) {
        fail(BundleErrorKind::kShape,
             "sequence '" + seq.id + "': embedding layer missing or misshapen");
      }
      check_finite(t.embedding->data(), seq.id, "embedding");
    } else if (t.embedding) {
      fail(BundleErrorKind::kShape,
           "sequence '" + seq.id +
               "': embedding given but has_embedding_layer is false");
    }
  }
}

nlohmann::json manifest_to_json(const BundleManifest& m) {
  nlohmann::json seqs = nlohmann::json::array();
  for (const auto& s : m.sequences) {
    nlohmann::json spans = nlohmann::json::array();
    for (const auto& span : s.spans) {
      spans.push_back({{"start", span.start},
                       {"end", span.end},
                       {"label", std::string(to_string(span.label))}});
    }
    seqs.push_back({{"id", s.id},
                    {"condition", std::string(to_string(s.condition))},
                    {"token_ids", s.token_ids},
                    {"spans", spans},
                    {"payload", s.payload}});
  }
  return {{"format_version", m.format_version},
          {"model_id", m.model_id},
          {"tokenizer_id", m.tokenizer_id},
          {"layer_semantics", m.layer_semantics},
          {"n_layers_stored", m.n_layers_stored},
          {"hidden_dim", m.hidden_dim},
          {"has_embedding_layer", m.has_embedding_layer},
          {"precision", m.precision},
          {"creation_seed", m.creation_seed},
          {"tracked_token_ids", m.tracked_token_ids},
          {"tracked_token_labels", m.tracked_token_labels},
          {"suite", m.suite},
          {"sequences", seqs}};
}

BundleManifest manifest_from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) {
    fail(BundleErrorKind::kSchema, "manifest is not a JSON object");
  }
  BundleManifest m;
  m.format_version = required<std::uint32_t>(doc, "format_version");
  if (m.format_version != kFormatVersion) {
    fail(BundleErrorKind::kVersion, "manifest format_version " +
                                        std::to_string(m.format_version) +
                                        " is not supported");
  }
  m.model_id = required<std::string>(doc, "model_id");
  m.tokenizer_id = required<std::string>(doc, "tokenizer_id");
  m.layer_semantics = required<std::string>(doc, "layer_semantics");
  m.n_layers_stored = required<std::uint32_t>(doc, "n_layers_stored");
  m.hidden_dim = required<std::uint32_t>(doc, "hidden_dim");
  m.creation_seed = required<std::uint64_t>(doc, "creation_seed");
  m.tracked_token_ids =
      required<std::vector<std::int64_t>>(doc, "tracked_token_ids");
  m.has_embedding_layer = doc.value("has_embedding_layer", false);
  if (doc.contains("precision")) {
    m.precision = required<std::string>(doc, "precision");
  }
  if (doc.contains("tracked_token_labels")) {
    m.tracked_token_labels =
        required<std::vector<std::string>>(doc, "tracked_token_labels");
  }
  m.suite = doc.value("suite", nlohmann::json());

  const auto seqs = required<nlohmann::json>(doc, "sequences");
  if (!seqs.is_array()) {
    fail(BundleErrorKind::kSchema, "'sequences' must be an array");
  }
  for (const auto& entry : seqs) {
    SequenceRecord s;
    s.id = required<std::string>(entry, "id");
    try {
      s.condition = parse_condition(required<std::string>(entry, "condition"));
    } catch (const ParseError& e) {
      fail(BundleErrorKind::kSchema, "sequence '" + s.id + "': " + e.what());
    }
    s.token_ids = required<std::vector<std::int64_t>>(entry, "token_ids");
    for (const auto& span : required<nlohmann::json>(entry, "spans")) {
      LabeledSpan ls;
      ls.start = required<std::size_t>(span, "start");
      ls.end = required<std::size_t>(span, "end");
      try {
        ls.label = parse_span_label(required<std::string>(span, "label"));
      } catch (const ParseError& e) {
        fail(BundleErrorKind::kSchema, "sequence '" + s.id + "': " + e.what());
      }
      s.spans.push_back(ls);
    }
    s.payload = entry.value("payload", nlohmann::json::object());
    m.sequences.push_back(std::move(s));
  }
  return m;
}

std::filesystem::path tensor_path(const std::filesystem::path& dir,
                                  std::string_view id) {
  return dir / ("seq_" + std::string(id) + ".bin");
}

std::filesystem::path logits_path(const std::filesystem::path& dir,
                                  std::string_view id) {
  return dir / ("seq_" + std::string(id) + ".logits.bin");
}

std::filesystem::path embedding_path(const std::filesystem::path& dir,
                                     std::string_view id) {
  return dir / ("seq_" + std::string(id) + ".embedding.bin");
}

void write_bundle(const std::filesystem::path& dir, const BundleManifest& m,
                  std::span<const SequenceTensors> tensors) {
  validate(m, tensors);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) {
    fail(BundleErrorKind::kIo,
         "cannot create " + dir.string() + ": " + ec.message());
  }
  write_file(dir / "manifest.json", manifest_to_json(m).dump(2) + "\n");
  for (std::size_t i = 0; i < m.sequences.size(); ++i) {
    const auto& id = m.sequences[i].id;
    write_file(tensor_path(dir, id), encode_tensor(tensors[i].activations));
    if (!m.tracked_token_ids.empty()) {
      write_file(logits_path(dir, id), encode_logits(tensors[i].logits));
    }
    if (m.has_embedding_layer) {
      write_file(embedding_path(dir, id), encode_tensor(*tensors[i].embedding));
    }
  }
}

TrajectoryBundle read_bundle(const std::filesystem::path& dir) {
  const auto manifest_file = dir / "manifest.json";
  std::ifstream in(manifest_file);
  if (!in) {
    fail(BundleErrorKind::kIo, "cannot open " + manifest_file.string());
  }
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    fail(BundleErrorKind::kSchema,
         "manifest is not valid JSON: " + std::string(e.what()));
  }
  BundleManifest m = manifest_from_json(doc);

  std::vector<SequenceTensors> tensors;
  tensors.reserve(m.sequences.size());
  for (const auto& seq : m.sequences) {
    if (!valid_id(seq.id)) {
      fail(BundleErrorKind::kSchema,
           "sequence id '" + seq.id + "' must be nonempty [A-Za-z0-9._-]");
    }
    SequenceTensors t;
    t.activations =
        decode_tensor(read_file(tensor_path(dir, seq.id), seq.id), seq.id,
                      "activations");
    if (!m.tracked_token_ids.empty()) {
      t.logits = decode_logits(read_file(logits_path(dir, seq.id), seq.id),
                               seq.id);
    }
    if (m.has_embedding_layer) {
      t.embedding =
          decode_tensor(read_file(embedding_path(dir, seq.id), seq.id), seq.id,
                        "embedding");
    }
    tensors.push_back(std::move(t));
  }
  return TrajectoryBundle(std::move(m), std::move(tensors));
}

ActivationTensor slice_window(const TrajectoryBundle& bundle,
                              std::string_view sequence_id, TokenRange span) {
  const std::size_t idx = bundle.index_of(sequence_id);
  const ActivationTensor& full = bundle.tensors(idx).activations;
  if (span.start >= span.end) {
    fail(BundleErrorKind::kInvalidSpan,
         "empty window [" + std::to_string(span.start) + "," +
             std::to_string(span.end) + ")");
  }
  if (span.end > full.n_tokens()) {
    fail(BundleErrorKind::kSpanRange,
         "window end " + std::to_string(span.end) + " exceeds " +
             std::to_string(full.n_tokens()) + " tokens of '" +
             std::string(sequence_id) + "'");
  }
  ActivationTensor out(full.n_layers(), span.size(), full.hidden_dim());
  for (std::size_t layer = 0; layer < full.n_layers(); ++layer) {
    for (std::size_t t = 0; t < span.size(); ++t) {
      const auto src = full.row(layer, span.start + t);
      std::copy(src.begin(), src.end(), out.row(layer, t).begin());
    }
  }
  return out;
}

}  // namespace trajgeom::store
