#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "nbar/simulate.hpp"
#include "nbar/tree.hpp"

using namespace nbar;

namespace {

BinaryTreeData tree_from_paths(const std::map<std::string, double>& m) {
  std::map<std::uint64_t, double> nodes;
  for (const auto& [k, v] : m) nodes[NodePath::parse(k).heap_index()] = v;
  return BinaryTreeData::from_map(nodes);
}

}  // namespace

TEST(TreeSize, FullTreeCounts) {
  EXPECT_EQ(full_tree_size(0), 1u);
  EXPECT_EQ(full_tree_size(9), 1023u);
  EXPECT_EQ(full_tree_size(14), 32767u);
  std::uint64_t sum = 0;
  for (int m = 0; m <= 12; ++m) sum += generation_size(m);
  EXPECT_EQ(sum, full_tree_size(12));
}

TEST(NodePath, HeapIndexRoundTripUpToLength20) {
  std::mt19937_64 gen(3);
  for (int len = 0; len <= 20; ++len) {
    for (int rep = 0; rep < 50; ++rep) {
      std::string bits;
      for (int i = 0; i < len; ++i) bits.push_back(gen() & 1 ? '1' : '0');
      const NodePath p = NodePath::parse(bits);
      EXPECT_EQ(p.str(), bits);
      EXPECT_EQ(p.generation(), len);
      EXPECT_EQ(NodePath::from_heap_index(p.heap_index()), p);
    }
  }
  for (std::uint64_t i = 0; i < 5000; ++i)
    EXPECT_EQ(NodePath::from_heap_index(i).heap_index(), i);
}

TEST(NodePath, ChildrenFollowHeapLayout) {
  const NodePath root;
  EXPECT_EQ(root.heap_index(), 0u);
  EXPECT_EQ(root.child(0).heap_index(), 1u);
  EXPECT_EQ(root.child(1).heap_index(), 2u);
  const NodePath u = NodePath::parse("0110");
  EXPECT_EQ(u.child(0).heap_index(), 2 * u.heap_index() + 1);
  EXPECT_EQ(u.child(1).heap_index(), 2 * u.heap_index() + 2);
  EXPECT_EQ(u.child(1).parent(), u);
  EXPECT_EQ(u.child(1).str(), "01101");
}

TEST(NodePath, RejectsMalformed) {
  EXPECT_THROW(NodePath::parse("012"), DataError);
  EXPECT_THROW(NodePath::parse(std::string(31, '0')), DataError);
}

TEST(CollectPairs, DepthOneTree) {
  const auto t = tree_from_paths({{"", 0.0}, {"0", 2.0}, {"1", -1.0}});
  ASSERT_EQ(t.depth(), 1);
  const auto p0 = collect_pairs(t, 0, 0);
  ASSERT_EQ(p0.size(), 1u);
  EXPECT_EQ(p0[0], (TraitPair{0.0, 2.0}));
  EXPECT_EQ(collect_pairs(t, 1, 0)[0], (TraitPair{0.0, -1.0}));
}

TEST(CollectPairs, MissingChildExcluded) {
  const auto t = tree_from_paths({{"", 0.0}, {"1", -1.0}});
  EXPECT_TRUE(collect_pairs(t, 0, 0).empty());
  EXPECT_EQ(collect_pairs(t, 1, 0).size(), 1u);
}

TEST(CollectPairs, FullSimulatedTree) {
  ModelSpec m = builtin_model("paper-neq");
  const auto t = simulate_nbar(m, 3, 5);
  EXPECT_EQ(t.size(), full_tree_size(3));
  EXPECT_EQ(collect_pairs(t, 0, 2).size(), 7u);
  EXPECT_EQ(collect_pairs(t, 1, 2).size(), 7u);
}

TEST(CollectPairs, RemovingLeafRemovesOnePair) {
  ModelSpec m = builtin_model("paper-eq");
  const auto full = simulate_nbar(m, 4, 11);
  std::map<std::uint64_t, double> nodes;
  full.for_each([&](std::uint64_t i, double v) { nodes[i] = v; });
  const std::uint64_t leaf = NodePath::parse("0101").heap_index();
  nodes.erase(leaf);
  const auto t = BinaryTreeData::from_map(nodes, 4);
  EXPECT_EQ(collect_pairs(t, 1, 3).size(), collect_pairs(full, 1, 3).size() - 1);
  EXPECT_EQ(collect_pairs(t, 0, 3).size(), collect_pairs(full, 0, 3).size());
}

TEST(BinaryTreeData, SparseStorageForDeepSparseTrees) {
  std::map<std::uint64_t, double> nodes;
  NodePath p;
  for (int g = 0; g <= 25; ++g) {
    nodes[p.heap_index()] = g;
    p = p.child(g % 2);
  }
  const auto t = BinaryTreeData::from_map(nodes);
  EXPECT_EQ(t.depth(), 25);
  EXPECT_EQ(t.size(), 26u);
  EXPECT_EQ(collect_pairs(t, 0).size() + collect_pairs(t, 1).size(), 25u);
  std::vector<std::uint64_t> order;
  t.for_each([&](std::uint64_t i, double) { order.push_back(i); });
  EXPECT_TRUE(std::is_sorted(order.begin(), order.end()));
}

TEST(BinaryTreeData, RejectsTooDeep) {
  std::map<std::uint64_t, double> nodes{{0, 1.0}};
  EXPECT_THROW(BinaryTreeData::from_map(nodes, 31), DataError);
}

TEST(TreeCsv, ReadWrite) {
  std::istringstream in("node,value\n,0\n0,2.5\n1,-1\n");
  const auto t = read_tree_csv(in);
  EXPECT_EQ(t.size(), 3u);
  EXPECT_DOUBLE_EQ(*t.value(NodePath::parse("0")), 2.5);
  std::ostringstream out;
  write_tree_csv(out, t);
  EXPECT_EQ(out.str(), "node,value\n,0\n0,2.5\n1,-1\n");
}

TEST(TreeCsv, Errors) {
  std::istringstream dup("node,value\n,0\n,1\n");
  EXPECT_THROW(read_tree_csv(dup), DataError);
  std::istringstream bad("node,value\n,0\n0x,1\n");
  try {
    read_tree_csv(bad);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos);
  }
  std::istringstream hdr("a,b\n");
  EXPECT_THROW(read_tree_csv(hdr), DataError);
}
