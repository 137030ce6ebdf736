#pragma once

/** @file
 * Binary genealogical trees: Ulam-Harris paths, heap indexing, and trait
 * storage with missing nodes.
 */

#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "nbar/errors.hpp"

namespace nbar {

/// Deepest generation a tree may reach (about 2^31 nodes when full).
inline constexpr int kMaxDepth = 30;

/// Number of nodes in T_n, i.e. generations 0..n of the full tree.
constexpr std::uint64_t full_tree_size(int n) {
  if (n < 0) return 0;
  return (std::uint64_t{1} << (n + 1)) - 1;
}

/// Number of nodes in generation m.
constexpr std::uint64_t generation_size(int m) { return std::uint64_t{1} << m; }

/// Generation of the node stored at a heap index (root -> 0).
constexpr int generation_of(std::uint64_t heap_index) {
  int g = 0;
  std::uint64_t v = heap_index + 1;
  while (v > 1) {
    v >>= 1;
    ++g;
  }
  return g;
}

/**
 * A node of the binary genealogical tree, written as the bit string of child
 * types from the root. The empty string is the root; u0 and u1 are the
 * children of u.
 */
class NodePath {
 public:
  NodePath() = default;

  /// Parses a string of '0'/'1' characters. Throws DataError otherwise.
  static NodePath parse(std::string_view bits) {
    if (bits.size() > static_cast<std::size_t>(kMaxDepth))
      throw DataError("node path '" + std::string(bits) + "' deeper than " +
                      std::to_string(kMaxDepth));
    NodePath p;
    for (char c : bits) {
      if (c != '0' && c != '1')
        throw DataError("malformed node path '" + std::string(bits) + "'");
      p = p.child(c - '0');
    }
    return p;
  }

  static NodePath from_heap_index(std::uint64_t index) {
    NodePath p;
    p.length_ = generation_of(index);
    p.bits_ = index + 1 - (std::uint64_t{1} << p.length_);
    return p;
  }

  /// root -> 0, children of i -> 2i+1 and 2i+2.
  std::uint64_t heap_index() const {
    return (std::uint64_t{1} << length_) - 1 + bits_;
  }

  int generation() const { return length_; }
  bool is_root() const { return length_ == 0; }

  NodePath child(int type) const {
    if (length_ >= kMaxDepth) throw DataError("node path exceeds depth limit");
    NodePath c;
    c.length_ = length_ + 1;
    c.bits_ = (bits_ << 1) | static_cast<std::uint64_t>(type & 1);
    return c;
  }

  /// Parent of a non-root node.
  NodePath parent() const {
    NodePath p;
    p.length_ = length_ - 1;
    p.bits_ = bits_ >> 1;
    return p;
  }

  /// Type (0 or 1) of the last division leading to this node.
  int last_type() const { return static_cast<int>(bits_ & 1); }

  std::string str() const {
    std::string s(static_cast<std::size_t>(length_), '0');
    for (int i = 0; i < length_; ++i)
      if ((bits_ >> (length_ - 1 - i)) & 1) s[static_cast<std::size_t>(i)] = '1';
    return s;
  }

  friend bool operator==(const NodePath&, const NodePath&) = default;

 private:
  std::uint64_t bits_ = 0;
  int length_ = 0;
};

/// A parent trait paired with the trait of one of its children.
struct TraitPair {
  double parent;
  double child;
  friend bool operator==(const TraitPair&, const TraitPair&) = default;
};

/**
 * Trait values X_u on the nodes of T_depth, some of which may be missing.
 *
 * Storage is dense (heap-indexed, with a presence mask) for full or
 * near-full trees and a sparse ordered map otherwise. Both iterate in heap
 * index order, which is breadth-first order. Immutable once built.
 */
class BinaryTreeData {
 public:
  BinaryTreeData() = default;

  /// Full tree of the given depth from heap-ordered values.
  static BinaryTreeData full(int depth, std::vector<double> values) {
    check_depth(depth);
    if (values.size() != full_tree_size(depth))
      throw ConfigError("full tree of depth " + std::to_string(depth) +
                        " needs " + std::to_string(full_tree_size(depth)) +
                        " values");
    BinaryTreeData t;
    t.depth_ = depth;
    t.dense_ = true;
    t.count_ = values.size();
    t.present_.assign(values.size(), 1);
    t.values_ = std::move(values);
    return t;
  }

  /// Tree from a heap-index map; depth is inferred unless given (>= max gen).
  static BinaryTreeData from_map(const std::map<std::uint64_t, double>& nodes,
                                 std::optional<int> depth = std::nullopt) {
    int d = 0;
    for (const auto& [idx, v] : nodes) d = std::max(d, generation_of(idx));
    if (depth) {
      if (*depth < d)
        throw DataError("stored node deeper than declared depth " +
                        std::to_string(*depth));
      d = *depth;
    }
    check_depth(d);
    BinaryTreeData t;
    t.depth_ = nodes.empty() && !depth ? -1 : d;
    t.count_ = nodes.size();
    const std::uint64_t slots = t.depth_ < 0 ? 0 : full_tree_size(t.depth_);
    if (slots <= (std::uint64_t{1} << 16) || slots <= 4 * nodes.size()) {
      t.dense_ = true;
      t.values_.assign(slots, 0.0);
      t.present_.assign(slots, 0);
      for (const auto& [idx, v] : nodes) {
        t.values_[idx] = v;
        t.present_[idx] = 1;
      }
    } else {
      t.dense_ = false;
      t.sparse_ = nodes;
    }
    return t;
  }

  /// Deepest generation covered; -1 for an empty tree without declared depth.
  int depth() const { return depth_; }
  std::size_t size() const { return count_; }
  bool empty() const { return count_ == 0; }

  /// True when every node of T_depth is stored.
  bool is_full() const {
    return depth_ >= 0 && count_ == full_tree_size(depth_);
  }

  std::optional<double> value(std::uint64_t heap_index) const {
    if (dense_) {
      if (heap_index >= values_.size() || !present_[heap_index]) return std::nullopt;
      return values_[heap_index];
    }
    auto it = sparse_.find(heap_index);
    if (it == sparse_.end()) return std::nullopt;
    return it->second;
  }

  std::optional<double> value(const NodePath& u) const {
    return value(u.heap_index());
  }

  /// Visits (heap index, value) of stored nodes with generation <= max_gen,
  /// in breadth-first order.
  template <typename Fn>
  void for_each(int max_gen, Fn&& fn) const {
    if (depth_ < 0 || max_gen < 0) return;
    const std::uint64_t end = full_tree_size(std::min(max_gen, depth_));
    if (dense_) {
      for (std::uint64_t i = 0; i < end; ++i)
        if (present_[i]) fn(i, values_[i]);
    } else {
      for (auto it = sparse_.begin(); it != sparse_.end() && it->first < end; ++it)
        fn(it->first, it->second);
    }
  }

  template <typename Fn>
  void for_each(Fn&& fn) const {
    for_each(depth_, std::forward<Fn>(fn));
  }

 private:
  static void check_depth(int depth) {
    if (depth > kMaxDepth)
      throw DataError("tree depth " + std::to_string(depth) +
                      " exceeds limit " + std::to_string(kMaxDepth));
  }

  int depth_ = -1;
  std::size_t count_ = 0;
  bool dense_ = true;
  std::vector<double> values_;
  std::vector<std::uint8_t> present_;
  std::map<std::uint64_t, double> sparse_;
};

/// Pairs (X_u, X_{u,type}) with both stored and |u| <= up_to, breadth-first.
inline std::vector<TraitPair> collect_pairs(const BinaryTreeData& tree, int type,
                                            int up_to) {
  std::vector<TraitPair> out;
  if (up_to > tree.depth() - 1) up_to = tree.depth() - 1;
  tree.for_each(up_to, [&](std::uint64_t i, double x) {
    if (auto c = tree.value(2 * i + 1 + static_cast<std::uint64_t>(type)))
      out.push_back({x, *c});
  });
  return out;
}

inline std::vector<TraitPair> collect_pairs(const BinaryTreeData& tree, int type) {
  return collect_pairs(tree, type, tree.depth() - 1);
}

// ---------------------------------------------------------------------------
// CSV

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ' || s.back() == '\t'))
    s.remove_suffix(1);
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
  return s;
}

inline std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= line.size(); ++i) {
    if (i == line.size() || line[i] == ',') {
      fields.push_back(trim(line.substr(start, i - start)));
      start = i + 1;
    }
  }
  return fields;
}

inline double parse_real(std::string_view s, std::size_t line_no) {
  std::string tmp(s);
  std::size_t pos = 0;
  double v = 0;
  try {
    v = std::stod(tmp, &pos);
  } catch (const std::exception&) {
    pos = std::string::npos;
  }
  if (pos != tmp.size() || tmp.empty())
    throw DataError("line " + std::to_string(line_no) + ": bad value '" + tmp + "'");
  return v;
}

inline std::string format_real(double v) {
  std::ostringstream os;
  os.precision(std::numeric_limits<double>::max_digits10);
  os << v;
  return os.str();
}

}  // namespace detail

/// Reads the `node,value` format; absent rows are missing nodes.
inline BinaryTreeData read_tree_csv(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) return BinaryTreeData::from_map({});
  ++line_no;
  auto header = detail::split_csv(line);
  if (header.size() != 2 || header[0] != "node" || header[1] != "value")
    throw DataError("line 1: expected header 'node,value'");
  std::map<std::uint64_t, double> nodes;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    auto f = detail::split_csv(line);
    if (f.size() != 2)
      throw DataError("line " + std::to_string(line_no) + ": expected 2 fields");
    NodePath p;
    try {
      p = NodePath::parse(f[0]);
    } catch (const DataError& e) {
      throw DataError("line " + std::to_string(line_no) + ": " + e.what());
    }
    double v = detail::parse_real(f[1], line_no);
    if (!nodes.emplace(p.heap_index(), v).second)
      throw DataError("line " + std::to_string(line_no) + ": duplicate node '" +
                      p.str() + "'");
  }
  return BinaryTreeData::from_map(nodes);
}

inline BinaryTreeData read_tree_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  return read_tree_csv(in);
}

inline void write_tree_csv(std::ostream& out, const BinaryTreeData& tree) {
  out << "node,value\n";
  tree.for_each([&](std::uint64_t i, double v) {
    out << NodePath::from_heap_index(i).str() << ',' << detail::format_real(v) << '\n';
  });
}

}  // namespace nbar
