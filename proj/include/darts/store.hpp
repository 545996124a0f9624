#pragma once

// Binary artifacts: hit tables (.hits.bin), single-player solutions
// (.nssol.bin) and solved games with everything the advisor needs
// (.zsgsol.bin). Skill models are JSON (.dartskill.json, see skill.hpp).
//
// File layout, little-endian:
//   "DARTSBIN" | u32 format_version | u32 kind | u64 content_hash
//   | u64 meta_len | meta JSON | pad to 8 | payload | u64 FNV-1a of all prior bytes
// Payload arrays are a u64 element count followed by the raw elements, padded
// to 8 bytes, so every table starts aligned.

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

#include <json.hpp>

#include "darts/hash.hpp"
#include "darts/ns_solver.hpp"
#include "darts/zsg_solver.hpp"

namespace darts {

static_assert(std::endian::native == std::endian::little, "artifact files are written in host byte order");

inline constexpr std::uint32_t kFormatVersion = 1;
inline constexpr char kMagic[8] = {'D', 'A', 'R', 'T', 'S', 'B', 'I', 'N'};
inline constexpr const char* kProducer = "darts 1.0";

enum class ArtifactKind : std::uint32_t { Hits = 1, NsSolution = 2, ZsgSolution = 3 };

inline const char* kind_name(ArtifactKind k) {
  switch (k) {
    case ArtifactKind::Hits:
      return "hits";
    case ArtifactKind::NsSolution:
      return "nssol";
    case ArtifactKind::ZsgSolution:
      return "zsgsol";
  }
  return "unknown";
}

struct StoreError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct VersionMismatch : StoreError {
  using StoreError::StoreError;
};
struct TruncatedFile : StoreError {
  using StoreError::StoreError;
};
struct CorruptFile : StoreError {
  using StoreError::StoreError;
};

struct ArtifactHeader {
  std::uint32_t format_version = kFormatVersion;
  ArtifactKind kind = ArtifactKind::Hits;
  std::uint64_t content_hash = 0;
  nlohmann::json meta = nlohmann::json::object();
};

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// ---------------------------------------------------------------------------
// Content hashes of the inputs that determine an artifact

inline std::uint64_t grid_hash(const ActionGrid& grid) {
  Fnv1a h;
  h.update_pod(grid.cell_size());
  h.update_pod(static_cast<std::uint64_t>(grid.size()));
  h.update(grid.targets().data(), grid.size() * sizeof(Vec2));
  return h.digest();
}

inline std::uint64_t hits_key(std::uint64_t skill_hash, std::uint64_t geometry_hash, const ActionGrid& grid,
                              double integration_cell) {
  Fnv1a h;
  h.update("hits");
  h.update_pod(skill_hash);
  h.update_pod(geometry_hash);
  h.update_pod(grid_hash(grid));
  h.update_pod(integration_cell);
  return h.digest();
}

// Tables built without a skill model (explicit or perfect) also hash their rows.
inline std::uint64_t content_hash(const HitTable& t) {
  std::uint64_t k = hits_key(t.skill_hash, t.geometry_hash, t.grid, t.integration_cell);
  if (t.skill_hash == 0) {
    Fnv1a h;
    h.update_pod(k);
    h.update(t.probs.data(), t.probs.size() * sizeof(double));
    k = h.digest();
  }
  return k;
}

inline std::uint64_t solve_key(ArtifactKind kind, std::uint64_t hits_a, std::uint64_t hits_b, const SolveConfig& cfg) {
  Fnv1a h;
  h.update(kind_name(kind));
  h.update_pod(hits_a);
  h.update_pod(hits_b);
  h.update_pod(cfg.start_score);
  h.update_pod(cfg.rel_tol);
  h.update_pod(cfg.max_policy_iters);
  h.update_pod(cfg.max_alternations);
  return h.digest();
}

namespace detail {

class BinWriter {
 public:
  explicit BinWriter(std::ostream& os) : os_(os) {}

  void bytes(const void* p, std::size_t n) {
    os_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
    h_.update(p, n);
    n_ += n;
  }
  template <class T>
  void pod(const T& v) {
    static_assert(std::is_trivially_copyable_v<T>);
    bytes(&v, sizeof(T));
  }
  void pad() {
    static constexpr char zero[8] = {};
    if (n_ % 8) bytes(zero, 8 - n_ % 8);
  }
  template <class T>
  void array(const T* data, std::size_t n) {
    pod<std::uint64_t>(n);
    bytes(data, n * sizeof(T));
    pad();
  }
  template <class T>
  void array(const std::vector<T>& v) {
    array(v.data(), v.size());
  }
  void finish() {
    const std::uint64_t d = h_.digest();
    os_.write(reinterpret_cast<const char*>(&d), sizeof d);
    os_.flush();
    if (!os_) throw StoreError("write failed");
  }

 private:
  std::ostream& os_;
  Fnv1a h_;
  std::uint64_t n_ = 0;
};

class BinReader {
 public:
  BinReader(std::istream& is, std::uint64_t file_size) : is_(is), size_(file_size) {}

  // Bytes left before the checksum trailer.
  std::uint64_t remaining() const { return size_ >= n_ + 8 ? size_ - n_ - 8 : 0; }

  void bytes(void* p, std::size_t n) {
    if (n > remaining()) throw TruncatedFile("file is truncated");
    is_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(is_.gcount()) != n) throw TruncatedFile("file is truncated");
    h_.update(p, n);
    n_ += n;
  }
  template <class T>
  T pod() {
    T v;
    bytes(&v, sizeof(T));
    return v;
  }
  void pad() {
    char skip[8];
    if (n_ % 8) bytes(skip, 8 - n_ % 8);
  }
  std::uint64_t count(std::size_t elem) {
    const auto n = pod<std::uint64_t>();
    if (n > remaining() / elem) throw TruncatedFile("file is truncated");
    return n;
  }
  template <class T>
  std::vector<T> array() {
    std::vector<T> v(count(sizeof(T)));
    bytes(v.data(), v.size() * sizeof(T));
    pad();
    return v;
  }
  // Reads an array whose length is already known from the metadata.
  template <class T>
  void array_into(T* dst, std::size_t expected) {
    if (count(sizeof(T)) != expected) throw CorruptFile("array length disagrees with the header");
    bytes(dst, expected * sizeof(T));
    pad();
  }
  void finish() {
    if (remaining() != 0) throw CorruptFile("unexpected trailing bytes");
    std::uint64_t stored = 0;
    is_.read(reinterpret_cast<char*>(&stored), sizeof stored);
    if (is_.gcount() != sizeof stored) throw TruncatedFile("file is truncated");
    if (stored != h_.digest()) throw CorruptFile("checksum mismatch");
  }

 private:
  std::istream& is_;
  std::uint64_t size_;
  Fnv1a h_;
  std::uint64_t n_ = 0;
};

inline void write_header(BinWriter& w, const ArtifactHeader& h) {
  w.bytes(kMagic, sizeof kMagic);
  w.pod(h.format_version);
  w.pod(static_cast<std::uint32_t>(h.kind));
  w.pod(h.content_hash);
  nlohmann::json meta = h.meta;
  meta["kind"] = kind_name(h.kind);
  meta["producer"] = kProducer;
  const std::string text = meta.dump();
  w.pod<std::uint64_t>(text.size());
  w.bytes(text.data(), text.size());
  w.pad();
}

inline ArtifactHeader read_header(BinReader& r) {
  char magic[8];
  r.bytes(magic, sizeof magic);
  if (!std::equal(magic, magic + 8, kMagic)) throw CorruptFile("not a darts artifact");
  ArtifactHeader h;
  h.format_version = r.pod<std::uint32_t>();
  if (h.format_version != kFormatVersion) {
    throw VersionMismatch("format version " + std::to_string(h.format_version) + " is not supported (expected " +
                          std::to_string(kFormatVersion) + ")");
  }
  const auto kind = r.pod<std::uint32_t>();
  if (kind < 1 || kind > 3) throw CorruptFile("unknown artifact kind " + std::to_string(kind));
  h.kind = static_cast<ArtifactKind>(kind);
  h.content_hash = r.pod<std::uint64_t>();
  std::string text(r.count(1), '\0');
  r.bytes(text.data(), text.size());
  r.pad();
  try {
    h.meta = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception&) {
    throw CorruptFile("metadata is not valid JSON");
  }
  return h;
}

// Writes through a temporary file renamed into place, so readers never see a
// partial artifact.
template <class Body>
void write_file(const std::filesystem::path& path, const ArtifactHeader& h, Body&& body) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw StoreError("cannot write " + path.string());
    BinWriter w(os);
    write_header(w, h);
    body(w);
    w.finish();
  }
  std::filesystem::rename(tmp, path);
}

template <class Body>
ArtifactHeader read_file(const std::filesystem::path& path, ArtifactKind expect, Body&& body) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw StoreError("cannot open " + path.string());
  const auto size = std::filesystem::file_size(path);
  BinReader r(is, size);
  ArtifactHeader h = read_header(r);
  if (h.kind != expect) {
    throw StoreError(path.string() + " holds " + kind_name(h.kind) + ", expected " + kind_name(expect));
  }
  body(r, h);
  r.finish();
  return h;
}

inline void write_hits(BinWriter& w, const HitTable& t) {
  w.pod(t.skill_hash);
  w.pod(t.geometry_hash);
  w.pod(t.integration_cell);
  w.pod(t.grid.cell_size());
  w.array(t.grid.targets());
  w.array(t.grid.lattice());
  w.array(t.probs);
}

inline HitTable read_hits(BinReader& r) {
  HitTable t;
  t.skill_hash = r.pod<std::uint64_t>();
  t.geometry_hash = r.pod<std::uint64_t>();
  t.integration_cell = r.pod<double>();
  const double cell = r.pod<double>();
  auto targets = r.array<Vec2>();
  auto lattice = r.array<GridPoint>();
  if (!lattice.empty() && lattice.size() != targets.size()) throw CorruptFile("grid lattice has the wrong length");
  t.grid = cell > 0.0 ? ActionGrid(cell, std::move(targets), std::move(lattice)) : ActionGrid(std::move(targets));
  t.probs = r.array<double>();
  if (t.probs.size() != t.grid.size() * kNumLabels) throw CorruptFile("hit table has the wrong shape");
  return t;
}

inline void write_policy(BinWriter& w, const Policy& p) {
  w.pod<std::int32_t>(p.max_score());
  w.pod<std::int32_t>(p.opponent_aware() ? 1 : 0);
  w.array(p.table());
}

inline Policy read_policy(BinReader& r) {
  const auto max = r.pod<std::int32_t>();
  const auto aware = r.pod<std::int32_t>();
  if (max < 0 || max > kMaxStart || (aware != 0 && aware != 1)) throw CorruptFile("bad policy dimensions");
  if (max == 0) {
    if (r.array<std::uint32_t>().size() != 0) throw CorruptFile("bad policy dimensions");
    return Policy();
  }
  Policy p(max, aware == 1);
  r.array_into(p.table().data(), p.table().size());
  return p;
}

inline void write_values(BinWriter& w, const ValueTable& v) {
  w.pod<std::int32_t>(v.max_score());
  w.array(v.raw());
}

inline ValueTable read_values(BinReader& r) {
  const auto max = r.pod<std::int32_t>();
  if (max < 0 || max > kMaxStart) throw CorruptFile("bad value table dimensions");
  if (max == 0) {
    if (r.array<double>().size() != 0) throw CorruptFile("bad value table dimensions");
    return ValueTable();
  }
  ValueTable v(max);
  r.array_into(v.raw().data(), v.raw().size());
  return v;
}

inline void write_game(BinWriter& w, const GameSolution& g) {
  w.pod<std::int32_t>(g.max_score);
  write_values(w, g.a);
  write_values(w, g.b);
  write_policy(w, g.policy_a);
  write_policy(w, g.policy_b);
  std::vector<std::uint16_t> alt, sw;
  std::vector<double> lo, up;
  for (const auto& s : g.stats) {
    alt.push_back(s.alternations);
    sw.push_back(s.sweeps);
    lo.push_back(s.lower);
    up.push_back(s.upper);
  }
  w.array(alt);
  w.array(sw);
  w.array(lo);
  w.array(up);
  w.array(g.bound_history);
  w.array(g.history_offset);
}

inline GameSolution read_game(BinReader& r) {
  GameSolution g;
  g.max_score = r.pod<std::int32_t>();
  if (g.max_score < 0 || g.max_score > kMaxStart) throw CorruptFile("bad game dimensions");
  g.a = read_values(r);
  g.b = read_values(r);
  g.policy_a = read_policy(r);
  g.policy_b = read_policy(r);
  const auto alt = r.array<std::uint16_t>();
  const auto sw = r.array<std::uint16_t>();
  const auto lo = r.array<double>();
  const auto up = r.array<double>();
  if (sw.size() != alt.size() || lo.size() != alt.size() || up.size() != alt.size()) {
    throw CorruptFile("block statistics have inconsistent lengths");
  }
  g.stats.resize(alt.size());
  for (std::size_t k = 0; k < alt.size(); ++k) g.stats[k] = {alt[k], sw[k], lo[k], up[k]};
  g.bound_history = r.array<std::pair<double, double>>();
  g.history_offset = r.array<std::uint32_t>();
  return g;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Hit tables

inline void save_hits(const HitTable& t, const std::filesystem::path& path) {
  ArtifactHeader h{kFormatVersion, ArtifactKind::Hits, content_hash(t), {}};
  h.meta["targets"] = t.size();
  h.meta["cell_mm"] = t.grid.cell_size();
  h.meta["integration_cell_mm"] = t.integration_cell;
  h.meta["skill_hash"] = hex64(t.skill_hash);
  h.meta["geometry_hash"] = hex64(t.geometry_hash);
  detail::write_file(path, h, [&](detail::BinWriter& w) { detail::write_hits(w, t); });
}

inline HitTable load_hits(const std::filesystem::path& path, ArtifactHeader* header = nullptr) {
  HitTable t;
  const ArtifactHeader h = detail::read_file(path, ArtifactKind::Hits,
                                             [&](detail::BinReader& r, const ArtifactHeader&) { t = detail::read_hits(r); });
  if (header) *header = h;
  return t;
}

// ---------------------------------------------------------------------------
// Single-player solutions

inline void save_ns(const NsSolution& s, std::uint64_t hits_hash, const SolveConfig& cfg,
                    const std::filesystem::path& path) {
  ArtifactHeader h{kFormatVersion, ArtifactKind::NsSolution, solve_key(ArtifactKind::NsSolution, hits_hash, 0, cfg), {}};
  h.meta["start_score"] = s.start_score;
  h.meta["slots"] = kNumSlots;
  h.meta["rel_tol"] = cfg.rel_tol;
  h.meta["hits_hash"] = hex64(hits_hash);
  detail::write_file(path, h, [&](detail::BinWriter& w) {
    w.pod<std::int32_t>(s.start_score);
    w.array(s.values);
    w.array(s.policy);
    w.array(s.sweeps);
  });
}

inline NsSolution load_ns(const std::filesystem::path& path, ArtifactHeader* header = nullptr) {
  NsSolution s;
  const ArtifactHeader h =
      detail::read_file(path, ArtifactKind::NsSolution, [&](detail::BinReader& r, const ArtifactHeader&) {
        s.start_score = r.pod<std::int32_t>();
        if (s.start_score < 0 || s.start_score > kMaxStart) throw CorruptFile("bad start score");
        const std::size_t n = static_cast<std::size_t>(s.start_score + 1) * kNumSlots;
        s.values = r.array<double>();
        s.policy = r.array<std::uint32_t>();
        s.sweeps = r.array<int>();
        if (s.values.size() != n || s.policy.size() != n || s.sweeps.size() != static_cast<std::size_t>(s.start_score + 1)) {
          throw CorruptFile("single-player solution has the wrong shape");
        }
      });
  if (header) *header = h;
  return s;
}

// ---------------------------------------------------------------------------
// Solved games

// Everything needed to advise either player: both hit tables, both
// single-player policies, the equilibrium, and the reference table for
// Delta-P. ref.a is A playing its single-player policy against B's
// equilibrium policy; ref.b is the same for B against A's.
struct SolutionBundle {
  BoardGeometry geometry;
  SolveConfig config;
  HitTable hits_a;
  HitTable hits_b;
  Policy ns_a;
  Policy ns_b;
  ZsgSolution eq;
  GameSolution ref;

  int max_score() const { return eq.max_score; }
};

inline SolutionBundle build_bundle(const HitTable& hits_a, const HitTable& hits_b, const BoardGeometry& g,
                                   const SolveConfig& cfg, bool keep_history = false) {
  SolutionBundle b;
  b.geometry = g;
  b.config = cfg;
  b.hits_a = hits_a;
  b.hits_b = hits_b;
  b.ns_a = Policy::from_ns(solve_ns(hits_a, cfg));
  b.ns_b = &hits_a == &hits_b ? b.ns_a : Policy::from_ns(solve_ns(hits_b, cfg));
  b.eq = solve_equilibrium(hits_a, hits_b, cfg, keep_history, &b.ns_b);
  b.ref.max_score = cfg.start_score;
  {
    GameRoles roles;
    roles.fixed_a = &b.ns_a;
    roles.fixed_b = &b.eq.policy_b;
    b.ref.a = std::move(solve_game(hits_a, hits_b, roles, cfg).a);
  }
  {
    GameRoles roles;
    roles.fixed_a = &b.eq.policy_a;
    roles.fixed_b = &b.ns_b;
    b.ref.b = std::move(solve_game(hits_a, hits_b, roles, cfg).b);
  }
  return b;
}

inline std::uint64_t content_hash(const SolutionBundle& b) {
  return solve_key(ArtifactKind::ZsgSolution, content_hash(b.hits_a), content_hash(b.hits_b), b.config);
}

inline void save_bundle(const SolutionBundle& b, const std::filesystem::path& path) {
  ArtifactHeader h{kFormatVersion, ArtifactKind::ZsgSolution, content_hash(b), {}};
  h.meta["start_score"] = b.max_score();
  h.meta["slots"] = kNumSlots;
  h.meta["rel_tol"] = b.config.rel_tol;
  h.meta["geometry"] = geometry_to_json(b.geometry);
  h.meta["hits_a"] = hex64(content_hash(b.hits_a));
  h.meta["hits_b"] = hex64(content_hash(b.hits_b));
  h.meta["targets"] = b.hits_a.size();
  detail::write_file(path, h, [&](detail::BinWriter& w) {
    w.pod<std::int32_t>(b.config.start_score);
    w.pod(b.config.rel_tol);
    w.pod<std::int32_t>(b.config.max_policy_iters);
    w.pod<std::int32_t>(b.config.max_alternations);
    detail::write_hits(w, b.hits_a);
    detail::write_hits(w, b.hits_b);
    detail::write_policy(w, b.ns_a);
    detail::write_policy(w, b.ns_b);
    detail::write_game(w, b.eq);
    detail::write_game(w, b.ref);
  });
}

inline SolutionBundle load_bundle(const std::filesystem::path& path, ArtifactHeader* header = nullptr) {
  SolutionBundle b;
  const ArtifactHeader h =
      detail::read_file(path, ArtifactKind::ZsgSolution, [&](detail::BinReader& r, const ArtifactHeader& hd) {
        try {
          b.geometry = geometry_from_json(hd.meta.at("geometry"));
        } catch (const std::exception& e) {
          throw CorruptFile(std::string("bad geometry in metadata: ") + e.what());
        }
        b.config.start_score = r.pod<std::int32_t>();
        b.config.rel_tol = r.pod<double>();
        b.config.max_policy_iters = r.pod<std::int32_t>();
        b.config.max_alternations = r.pod<std::int32_t>();
        b.hits_a = detail::read_hits(r);
        b.hits_b = detail::read_hits(r);
        b.ns_a = detail::read_policy(r);
        b.ns_b = detail::read_policy(r);
        b.eq = detail::read_game(r);
        b.ref = detail::read_game(r);
        const int S = b.config.start_score;
        if (b.eq.max_score != S || b.eq.a.max_score() != S || b.eq.b.max_score() != S ||
            b.ns_a.max_score() < S || b.ns_b.max_score() < S || b.hits_a.size() != b.hits_b.size()) {
          throw CorruptFile("solved game has inconsistent dimensions");
        }
      });
  if (header) *header = h;
  return b;
}

// Reads only the header, for catalogues.
inline ArtifactHeader peek_header(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw StoreError("cannot open " + path.string());
  detail::BinReader r(is, std::filesystem::file_size(path));
  return detail::read_header(r);
}

// ---------------------------------------------------------------------------
// Cache

// Content-addressed cache of hit tables and single-player solutions. A file
// whose header hash disagrees with its key, or that fails to load, is reported
// through warn and rebuilt.
class ArtifactCache {
 public:
  using Warn = std::function<void(const std::string&)>;

  explicit ArtifactCache(std::filesystem::path dir, Warn warn = nullptr) : dir_(std::move(dir)), warn_(std::move(warn)) {
    std::filesystem::create_directories(dir_);
    if (!warn_) warn_ = [](const std::string& m) { std::cerr << "warning: " << m << "\n"; };
  }

  // Cache in $DARTS_CACHE_DIR, if set.
  static std::optional<ArtifactCache> from_env(Warn warn = nullptr) {
    const char* d = std::getenv("DARTS_CACHE_DIR");
    if (!d || !*d) return std::nullopt;
    return ArtifactCache(d, std::move(warn));
  }

  const std::filesystem::path& dir() const { return dir_; }
  int computations() const { return computations_; }
  int reuses() const { return reuses_; }

  std::filesystem::path hits_path(std::uint64_t key) const { return dir_ / (hex64(key) + ".hits.bin"); }
  std::filesystem::path ns_path(std::uint64_t key) const { return dir_ / (hex64(key) + ".nssol.bin"); }

  HitTable hits(const SkillModel& m, const BoardGeometry& g, const ActionGrid& grid, double integration_cell) {
    const std::uint64_t key = hits_key(m.hash(), geometry_hash(g), grid, integration_cell);
    const auto path = hits_path(key);
    if (auto t = try_load(path, key, [&](ArtifactHeader& h) { return load_hits(path, &h); })) return std::move(*t);
    ++computations_;
    HitTable t = build_hit_table(m, g, grid, integration_cell);
    save_hits(t, path);
    return t;
  }

  NsSolution ns(const HitTable& hit, const SolveConfig& cfg) {
    const std::uint64_t hh = content_hash(hit);
    const std::uint64_t key = solve_key(ArtifactKind::NsSolution, hh, 0, cfg);
    const auto path = ns_path(key);
    if (auto s = try_load(path, key, [&](ArtifactHeader& h) { return load_ns(path, &h); })) return std::move(*s);
    ++computations_;
    NsSolution s = solve_ns(hit, cfg);
    save_ns(s, hh, cfg, path);
    return s;
  }

 private:
  template <class Load>
  auto try_load(const std::filesystem::path& path, std::uint64_t key, Load&& load)
      -> std::optional<decltype(load(std::declval<ArtifactHeader&>()))> {
    if (!std::filesystem::exists(path)) return std::nullopt;
    try {
      ArtifactHeader h;
      auto v = load(h);
      if (h.content_hash != key) {
        warn_(path.string() + ": content hash mismatch, recomputing");
        return std::nullopt;
      }
      ++reuses_;
      return v;
    } catch (const StoreError& e) {
      warn_(path.string() + ": " + e.what() + ", recomputing");
      return std::nullopt;
    }
  }

  std::filesystem::path dir_;
  Warn warn_;
  int computations_ = 0;
  int reuses_ = 0;
};

}  // namespace darts
