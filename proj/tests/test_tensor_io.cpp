#include <gtest/gtest.h>

#include <bit>
#include <cstring>

#include "csconf/error.hpp"
#include "csconf/tensor_io.hpp"
#include "test_util.hpp"

using namespace csconf;
using csconf::testing::TempDir;

namespace {

const std::filesystem::path kGolden = std::filesystem::path(CSCONF_TEST_DATA) / "golden_2x2.pct";

std::vector<std::uint8_t> golden_bytes() { return csconf::testing::read_bytes(kGolden); }

Tensor tensor_2x2() { return Tensor({2, 2}, {1.f, 2.f, 3.f, 4.f}); }

}  // namespace

TEST(Tensor, RejectsZeroSizedDimension) {
  EXPECT_THROW(Tensor({0}, {}), ArgumentError);
  EXPECT_THROW(Tensor({3, 0}, {}), ArgumentError);
}

TEST(Tensor, RejectsShapeDataMismatchAndNonFinite) {
  EXPECT_THROW(Tensor({2, 2}, {1.f, 2.f, 3.f}), ArgumentError);
  EXPECT_THROW(Tensor({2}, {1.f, std::numeric_limits<float>::quiet_NaN()}), ArgumentError);
  EXPECT_THROW(Tensor({1}, {std::numeric_limits<float>::infinity()}), ArgumentError);
  EXPECT_THROW(Tensor({}, {}), ArgumentError);
}

TEST(Pct1, EncodesGoldenFortyBytes) {
  const auto bytes = encode_tensor(tensor_2x2());
  ASSERT_EQ(bytes.size(), 40u);
  EXPECT_EQ(bytes[0], 0x50);
  EXPECT_EQ(bytes[1], 0x43);
  EXPECT_EQ(bytes[2], 0x54);
  EXPECT_EQ(bytes[3], 0x31);
  EXPECT_EQ(bytes, golden_bytes());
}

TEST(Pct1, WriteTensorMatchesGoldenFile) {
  TempDir dir("pct");
  write_tensor(tensor_2x2(), dir / "t.pct");
  EXPECT_EQ(csconf::testing::read_bytes(dir / "t.pct"), golden_bytes());
}

TEST(Pct1, ReadsGoldenFile) {
  const Tensor t = read_tensor(kGolden);
  EXPECT_EQ(t.shape(), (std::vector<std::uint64_t>{2, 2}));
  EXPECT_EQ(t, tensor_2x2());
}

TEST(Pct1, RejectsBadMagic) {
  auto bytes = golden_bytes();
  std::memcpy(bytes.data(), "XXXX", 4);
  EXPECT_THROW(decode_tensor(bytes), FormatError);
  TempDir dir("pct");
  std::ofstream(dir / "bad.pct", std::ios::binary).write(reinterpret_cast<const char*>(bytes.data()),
                                                          static_cast<std::streamsize>(bytes.size()));
  EXPECT_THROW(read_tensor(dir / "bad.pct"), FormatError);
}

TEST(Pct1, RejectsPayloadOneFloatShort) {
  auto bytes = golden_bytes();
  bytes.resize(bytes.size() - 4);
  EXPECT_THROW(decode_tensor(bytes), FormatError);
}

TEST(Pct1, RejectsTrailingBytesAndTruncatedHeader) {
  auto longer = golden_bytes();
  longer.push_back(0);
  EXPECT_THROW(decode_tensor(longer), FormatError);
  auto header = golden_bytes();
  header.resize(12);
  EXPECT_THROW(decode_tensor(header), FormatError);
}

TEST(Pct1, RejectsZeroDimensionAndNaNPayload) {
  auto zero = golden_bytes();
  std::memset(zero.data() + 8, 0, 8);  // first dim = 0
  EXPECT_THROW(decode_tensor(zero), FormatError);
  auto nan = golden_bytes();
  const std::uint32_t bits = std::bit_cast<std::uint32_t>(std::numeric_limits<float>::quiet_NaN());
  for (int b = 0; b < 4; ++b) nan[24 + b] = static_cast<std::uint8_t>(bits >> (8 * b));
  EXPECT_THROW(decode_tensor(nan), FormatError);
}

TEST(Pct1, RoundTripIsBitExactForRandomTensor) {
  SplitMix64 rng(42);
  std::vector<float> data(1000);
  for (auto& v : data) v = static_cast<float>(rng.normal() * 1e3);
  const Tensor t({10, 4, 25}, data);
  TempDir dir("pct");
  write_tensor(t, dir / "r.pct");
  const Tensor back = read_tensor(dir / "r.pct");
  ASSERT_EQ(back.shape(), t.shape());
  for (std::size_t i = 0; i < data.size(); ++i) {
    EXPECT_EQ(std::bit_cast<std::uint32_t>(back[i]), std::bit_cast<std::uint32_t>(data[i]));
  }
  EXPECT_EQ(encode_tensor(back), encode_tensor(t));
}

TEST(Labels, IntegralityChecked) {
  EXPECT_EQ(labels_from_tensor(Tensor({3}, {0.f, 2.f, 1.f})), (std::vector<int>{0, 2, 1}));
  EXPECT_THROW(labels_from_tensor(Tensor({2}, {0.f, 0.5f})), DataError);
  EXPECT_THROW(labels_from_tensor(Tensor({1}, {-1.f})), DataError);
}

// ---------------------------------------------------------------------------
// Manifests

namespace {

void write_cls_entry(const TempDir& dir, const std::string& id, int n, int c, bool labels) {
  std::vector<float> z(static_cast<std::size_t>(n * c));
  for (std::size_t i = 0; i < z.size(); ++i) z[i] = static_cast<float>(i % 7) - 3.f;
  write_tensor(Tensor({static_cast<std::uint64_t>(n), static_cast<std::uint64_t>(c)}, z), dir / (id + ".logits.pct"));
  if (labels) {
    std::vector<float> y(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) y[static_cast<std::size_t>(i)] = static_cast<float>(i % c);
    write_tensor(Tensor({static_cast<std::uint64_t>(n)}, y), dir / (id + ".labels.pct"));
  }
}

}  // namespace

TEST(Manifest, LoadsThreeLabelledEntriesInOrder) {
  TempDir dir("man");
  for (const char* id : {"b", "a", "c"}) write_cls_entry(dir, id, 4, 3, true);
  csconf::testing::write_text(dir / "manifest.txt",
                              "# three entries\nrole=validation\ntask=classification\nclass_count=3\n\n"
                              "b\tb.logits.pct\tb.labels.pct\n"
                              "a\ta.logits.pct\ta.labels.pct\n"
                              "c\tc.logits.pct\tc.labels.pct\n");
  const LoadedManifest lm = load_manifest(dir.path());  // directory form
  ASSERT_EQ(lm.data.sets.size(), 3u);
  EXPECT_EQ(lm.data.entry_ids, (std::vector<std::string>{"b", "a", "c"}));
  EXPECT_TRUE(lm.data.has_labels());
  EXPECT_EQ(lm.data.pooled().size(), 12);
}

TEST(Manifest, ValidationEntryWithoutLabelsIsDataError) {
  TempDir dir("man");
  write_cls_entry(dir, "a", 4, 3, false);
  csconf::testing::write_text(dir / "manifest.txt",
                              "role=validation\ntask=classification\nclass_count=3\na\ta.logits.pct\t-\n");
  EXPECT_THROW(load_manifest(dir / "manifest.txt"), DataError);
}

TEST(Manifest, TargetEntryMayOmitLabels) {
  TempDir dir("man");
  write_cls_entry(dir, "a", 4, 3, false);
  csconf::testing::write_text(dir / "manifest.txt",
                              "role=target\ntask=classification\nclass_count=3\na\ta.logits.pct\t-\n");
  const auto lm = load_manifest(dir / "manifest.txt");
  EXPECT_FALSE(lm.data.has_labels());
}

TEST(Manifest, ClassDimensionMismatchIsDataError) {
  TempDir dir("man");
  write_cls_entry(dir, "a", 4, 4, true);
  csconf::testing::write_text(dir / "manifest.txt",
                              "role=validation\ntask=classification\nclass_count=3\na\ta.logits.pct\ta.labels.pct\n");
  EXPECT_THROW(load_manifest(dir / "manifest.txt"), DataError);
}

TEST(Manifest, MissingFileIsDataError) {
  TempDir dir("man");
  EXPECT_THROW(load_manifest(dir / "nope.txt"), DataError);
  csconf::testing::write_text(dir / "manifest.txt",
                              "role=target\ntask=classification\nclass_count=3\na\tmissing.pct\t-\n");
  EXPECT_THROW(load_manifest(dir / "manifest.txt"), DataError);
}

TEST(Manifest, GrammarErrors) {
  EXPECT_THROW(parse_manifest("role=validation\ntask=classification\n"), FormatError);
  EXPECT_THROW(parse_manifest("role=validation\nrole=target\ntask=classification\nclass_count=2\na\tx\t-\n"),
               FormatError);
  EXPECT_THROW(parse_manifest("role=other\ntask=classification\nclass_count=2\na\tx\t-\n"), FormatError);
  EXPECT_THROW(parse_manifest("role=target\ntask=classification\nclass_count=1\na\tx\t-\n"), FormatError);
  EXPECT_THROW(parse_manifest("role=target\ntask=classification\nclass_count=2\na\tx\n"), FormatError);
  EXPECT_THROW(parse_manifest("role=target\ntask=classification\nclass_count=2\na\tx\t-\nrole=target\n"),
               FormatError);
}

TEST(Manifest, FormatParseRoundTrip) {
  Manifest m;
  m.role = Role::Target;
  m.task = Task::Segmentation;
  m.class_count = 3;
  m.entries = {{"case_0", "case_0.logits.pct", std::nullopt}, {"case_1", "sub/case_1.logits.pct", "sub/l.pct"}};
  const std::string text = format_manifest(m);
  const Manifest back = parse_manifest(text);
  EXPECT_EQ(back.role, m.role);
  EXPECT_EQ(back.task, m.task);
  EXPECT_EQ(back.class_count, 3);
  ASSERT_EQ(back.entries.size(), 2u);
  EXPECT_EQ(back.entries[0].id, "case_0");
  EXPECT_FALSE(back.entries[0].labels.has_value());
  EXPECT_EQ(back.entries[1].logits, "sub/case_1.logits.pct");
  EXPECT_EQ(*back.entries[1].labels, "sub/l.pct");
  EXPECT_EQ(format_manifest(back), text);
}

TEST(Manifest, WriteDatasetThenLoadReproducesData) {
  TempDir dir("man");
  Dataset d;
  d.id = "v";
  d.task = Task::Segmentation;
  d.class_count = 2;
  for (int k = 0; k < 2; ++k) {
    LogitMatrix z(12, 2);
    std::vector<int> y(12);
    for (int i = 0; i < 12; ++i) {
      z(i, 0) = 0.5f * i;
      z(i, 1) = 3.0f - 0.25f * (i + k);
      y[static_cast<std::size_t>(i)] = (i + k) % 2;
    }
    d.entry_ids.push_back("case_" + std::to_string(k));
    d.cases.emplace_back(std::vector<std::uint64_t>{3, 4}, PredictionSet(z, y));
  }
  const auto path = write_dataset(d, Role::Validation, dir.path());
  const auto first = csconf::testing::read_text(path);
  const auto lm = load_manifest(path);
  ASSERT_EQ(lm.data.cases.size(), 2u);
  for (std::size_t k = 0; k < 2; ++k) {
    EXPECT_EQ(lm.data.cases[k].spatial_shape(), d.cases[k].spatial_shape());
    EXPECT_EQ(lm.data.cases[k].pixels().logits(), d.cases[k].pixels().logits());
    EXPECT_EQ(lm.data.cases[k].pixels().labels(), d.cases[k].pixels().labels());
  }
  // Writing the loaded data again gives the same manifest text.
  TempDir again("man");
  const auto path2 = write_dataset(lm.data, Role::Validation, again.path());
  EXPECT_EQ(csconf::testing::read_text(path2), first);
}

TEST(SegCaseTensors, ClassAxisFirst) {
  // [c=2, 1, 2] logits: class 0 plane then class 1 plane.
  const Tensor z({2, 1, 2}, {1.f, 5.f, 2.f, 0.f});
  const Tensor y({1, 2}, {1.f, 0.f});
  const SegCase c = SegCase::from_tensors(z, &y);
  EXPECT_EQ(c.pixels().predicted(), (std::vector<int>{1, 0}));
  EXPECT_EQ(c.logits_tensor(), z);
  EXPECT_EQ(*c.labels_tensor(), y);
  const Tensor bad_y({2, 1}, {1.f, 0.f});
  EXPECT_THROW(SegCase::from_tensors(z, &bad_y), DataError);
}
