#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "eatcl/data.hpp"
#include "eatcl/errors.hpp"
#include "eatcl/matrix.hpp"
#include "eatcl/rng.hpp"

namespace eatcl {

struct BufferEntry {
  std::vector<double> x;
  int y = 0;
  std::optional<std::vector<double>> logits;  // teacher outputs captured at insertion

  friend bool operator==(const BufferEntry&, const BufferEntry&) = default;
};

/// Fixed-capacity replay memory filled by reservoir sampling.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity = 0) : capacity_(capacity) {}

  std::size_t capacity() const noexcept { return capacity_; }
  std::uint64_t seen_count() const noexcept { return seen_; }
  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }
  const std::vector<BufferEntry>& entries() const noexcept { return entries_; }

  /// Algorithm R: fill, then replace a uniform slot with probability capacity/seen.
  void reservoir_insert(BufferEntry e, Rng& rng) {
    ++seen_;
    if (entries_.size() < capacity_) {
      entries_.push_back(std::move(e));
      return;
    }
    if (capacity_ == 0) return;
    const std::uint64_t j = rng.below(seen_);
    if (j < capacity_) entries_[static_cast<std::size_t>(j)] = std::move(e);
  }

  /// `batch_size` indices drawn uniformly with replacement.
  std::vector<std::size_t> sample_indices(std::size_t batch_size, Rng& rng) const {
    if (entries_.empty()) throw PreconditionError("ReplayBuffer::sample: buffer is empty");
    std::vector<std::size_t> idx(batch_size);
    for (auto& i : idx) i = static_cast<std::size_t>(rng.below(entries_.size()));
    return idx;
  }

  std::vector<BufferEntry> sample(std::size_t batch_size, Rng& rng) const {
    std::vector<BufferEntry> out;
    out.reserve(batch_size);
    for (std::size_t i : sample_indices(batch_size, rng)) out.push_back(entries_[i]);
    return out;
  }

  /// Restores a buffer exactly as dumped.
  static ReplayBuffer restore(std::size_t capacity, std::uint64_t seen,
                              std::vector<BufferEntry> entries) {
    if (entries.size() > capacity) throw ArgumentError("ReplayBuffer::restore: over capacity");
    if (entries.size() != std::min<std::uint64_t>(seen, capacity))
      throw ArgumentError("ReplayBuffer::restore: entry count inconsistent with seen count");
    ReplayBuffer b(capacity);
    b.seen_ = seen;
    b.entries_ = std::move(entries);
    return b;
  }

 private:
  std::size_t capacity_;
  std::uint64_t seen_ = 0;
  std::vector<BufferEntry> entries_;
};

/// A sampled replay batch in matrix form.
struct ReplayBatch {
  Matrix x;
  std::vector<int> y;
  Matrix logits;  // 0 rows when the entries carry none

  std::size_t size() const noexcept { return y.size(); }
};

inline ReplayBatch to_batch(const std::vector<BufferEntry>& entries) {
  ReplayBatch b;
  if (entries.empty()) return b;
  const std::size_t dim = entries.front().x.size();
  b.x = Matrix(entries.size(), dim);
  const bool with_logits = entries.front().logits.has_value();
  if (with_logits) b.logits = Matrix(entries.size(), entries.front().logits->size());
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& e = entries[i];
    if (e.x.size() != dim) throw DimensionError("replay batch: mixed feature widths");
    std::copy(e.x.begin(), e.x.end(), b.x.row(i).begin());
    b.y.push_back(e.y);
    if (with_logits) {
      if (!e.logits || e.logits->size() != b.logits.cols())
        throw ConfigError("replay batch: entry without stored logits");
      std::copy(e.logits->begin(), e.logits->end(), b.logits.row(i).begin());
    }
  }
  return b;
}

// Dump format:
//   #eatcl-buffer capacity=<k> seen=<n> dim=<d> logits=<c>
//   f1,...,fd,label[,l1,...,lc]
// `logits=0` when entries carry no stored outputs.

inline void dump_buffer(std::ostream& out, const ReplayBuffer& buf) {
  const std::size_t dim = buf.empty() ? 0 : buf.entries().front().x.size();
  const auto& first = buf.empty() ? std::optional<std::vector<double>>{} : buf.entries().front().logits;
  const std::size_t nl = first ? first->size() : 0;
  out << "#eatcl-buffer capacity=" << buf.capacity() << " seen=" << buf.seen_count()
      << " dim=" << dim << " logits=" << nl << '\n';
  for (const auto& e : buf.entries())
    if (e.x.size() != dim || (e.logits ? e.logits->size() : 0) != nl)
      throw DimensionError("dump_buffer: entries differ in width or stored logits");
  for (const auto& e : buf.entries()) {
    for (double v : e.x) out << detail::format_double(v) << ',';
    out << e.y;
    if (e.logits)
      for (double v : *e.logits) out << ',' << detail::format_double(v);
    out << '\n';
  }
}

inline ReplayBuffer restore_buffer(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line.rfind("#eatcl-buffer", 0) != 0)
    throw ParseError("missing #eatcl-buffer header", 1);
  std::size_t capacity = 0, dim = 0, nl = 0;
  std::uint64_t seen = 0;
  {
    std::istringstream hs(line.substr(13));
    std::string kv;
    int found = 0;
    while (hs >> kv) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw ParseError("malformed header field '" + kv + "'", 1);
      const std::string k = kv.substr(0, eq);
      const unsigned long long v = std::stoull(kv.substr(eq + 1));
      if (k == "capacity") capacity = v, ++found;
      else if (k == "seen") seen = v, ++found;
      else if (k == "dim") dim = v, ++found;
      else if (k == "logits") nl = v, ++found;
      else throw ParseError("unknown header field '" + k + "'", 1);
    }
    if (found != 4) throw ParseError("header needs capacity, seen, dim, logits", 1);
  }
  std::vector<BufferEntry> entries;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    const auto f = detail::split_fields(detail::trim(line));
    if (f.size() != dim + 1 + nl)
      throw ParseError("expected " + std::to_string(dim + 1 + nl) + " fields", lineno);
    BufferEntry e;
    e.x.resize(dim);
    for (std::size_t j = 0; j < dim; ++j)
      if (!detail::parse_double(f[j], e.x[j])) throw ParseError("non-numeric feature", lineno);
    double lv = 0.0;
    if (!detail::parse_double(f[dim], lv)) throw ParseError("invalid label", lineno);
    e.y = static_cast<int>(lv);
    if (nl > 0) {
      e.logits.emplace(nl);
      for (std::size_t j = 0; j < nl; ++j)
        if (!detail::parse_double(f[dim + 1 + j], (*e.logits)[j]))
          throw ParseError("non-numeric logit", lineno);
    }
    entries.push_back(std::move(e));
  }
  return ReplayBuffer::restore(capacity, seen, std::move(entries));
}

}  // namespace eatcl
