#include <gtest/gtest.h>

#include <algorithm>
#include <set>

#include "test_support.hpp"

using namespace tabal;
using tabal::testing::TempDir;
using tabal::testing::write_text;

TEST(Csv, ParsesQuotedFieldsPerRfc4180) {
    const auto t = parse_csv("a,b,c\n\"x, y\",\"he said \"\"hi\"\"\",\"multi\nline\"\n1,2,3\n");
    ASSERT_EQ(t.size(), 3u);
    EXPECT_EQ(t[1][0], "x, y");
    EXPECT_EQ(t[1][1], "he said \"hi\"");
    EXPECT_EQ(t[1][2], "multi\nline");
    EXPECT_EQ(t[2][2], "3");
}

TEST(Csv, HandlesCrlfAndMissingTrailingNewline) {
    const auto t = parse_csv("a,b\r\n1,2\r\n3,4");
    ASSERT_EQ(t.size(), 3u);
    EXPECT_EQ(t[2][1], "4");
}

TEST(Csv, RejectsUnterminatedQuote) { EXPECT_THROW(parse_csv("a,b\n\"oops,1\n"), DataError); }

TEST(LoadDataset, MinimalParse) {
    TempDir dir("data");
    write_text(dir / "d.csv", "f1,f2,y\n1,2.5,b\n3,4.5,a\n5,6.5,b\n");
    const auto ds = load_dataset((dir / "d.csv").string());
    EXPECT_EQ(ds.name, "d");
    EXPECT_EQ(ds.num_classes(), 2u);
    EXPECT_EQ(ds.class_names, (std::vector<std::string>{"a", "b"}));
    EXPECT_EQ(ds.labels, (std::vector<std::size_t>{1, 0, 1}));
    EXPECT_EQ(ds.num_features(), 2u);
}

TEST(LoadDataset, MissingCellsAreRetained) {
    TempDir dir("data");
    write_text(dir / "d.csv", "f1,f2,y\n1,,a\nNA,2.5,b\n?,3.5,a\n");
    const auto ds = load_dataset((dir / "d.csv").string());
    ASSERT_EQ(ds.size(), 3u);
    EXPECT_FALSE(ds.rows[0][1].has_value());
    EXPECT_FALSE(ds.rows[1][0].has_value());
    EXPECT_FALSE(ds.rows[2][0].has_value());
    EXPECT_EQ(*ds.rows[1][1], "2.5");
}

TEST(LoadDataset, IrisShapedFile) {
    TempDir dir("data");
    std::string csv = "sepal_length,sepal_width,petal_length,petal_width,species\n";
    const char* species[] = {"setosa", "versicolor", "virginica"};
    for (int i = 0; i < 150; ++i) {
        csv += std::to_string(4.3 + 0.01 * i) + "," + std::to_string(2.0 + 0.013 * i) + "," +
               std::to_string(1.0 + 0.037 * i) + "," + std::to_string(0.1 + 0.0161 * i) + "," + species[i / 50] + "\n";
    }
    write_text(dir / "iris.csv", csv);
    const auto ds = load_dataset((dir / "iris.csv").string());
    EXPECT_EQ(ds.size(), 150u);
    EXPECT_EQ(ds.num_classes(), 3u);
    ASSERT_EQ(ds.num_features(), 4u);
    for (const auto& c : ds.columns) EXPECT_EQ(c.kind, ColumnKind::numerical) << c.name;
}

TEST(LoadDataset, MetadataSidecarOverridesKindsAndLabel) {
    TempDir dir("data");
    write_text(dir / "d.csv", "target,code,x\nyes,1,0.5\nno,2,1.5\nyes,3,2.5\n");
    write_text(dir / "d.json", R"({"label_column":"target","code":{"kind":"numerical"}})");
    const auto ds = load_dataset((dir / "d.csv").string(), (dir / "d.json").string());
    ASSERT_EQ(ds.num_features(), 2u);
    EXPECT_EQ(ds.columns[0].name, "code");
    EXPECT_EQ(ds.columns[0].kind, ColumnKind::numerical);
    EXPECT_EQ(ds.columns[0].source, KindSource::metadata);
    EXPECT_EQ(ds.columns[1].source, KindSource::inferred);
    EXPECT_EQ(ds.class_names, (std::vector<std::string>{"no", "yes"}));
}

TEST(LoadDataset, Errors) {
    TempDir dir("data");
    write_text(dir / "one.csv", "x,y\n1,a\n2,a\n");
    EXPECT_THROW(load_dataset((dir / "one.csv").string()), DataError);
    write_text(dir / "empty_label.csv", "x,y\n1,a\n2,\n3,b\n");
    EXPECT_THROW(load_dataset((dir / "empty_label.csv").string()), DataError);
    write_text(dir / "ragged.csv", "x,y\n1,a\n2\n");
    EXPECT_THROW(load_dataset((dir / "ragged.csv").string()), DataError);
    EXPECT_THROW(load_dataset((dir / "nope.csv").string()), DataError);
}

namespace {

Dataset column_dataset(const std::vector<Cell>& values) {
    Dataset ds;
    ds.name = "t";
    ds.columns = {{"c", ColumnKind::numerical, KindSource::inferred}};
    ds.class_names = {"a", "b"};
    for (std::size_t i = 0; i < values.size(); ++i) {
        ds.rows.push_back({values[i]});
        ds.labels.push_back(i % 2);
    }
    return ds;
}

}  // namespace

TEST(InferKinds, SmallIntegerAlphabetIsCategorical) {
    const auto ds = infer_column_kinds(column_dataset({"0", "1", "2", "1", "0"}));
    EXPECT_EQ(ds.columns[0].kind, ColumnKind::categorical);
}

TEST(InferKinds, TwentyFiveIntegersIsNumerical) {
    std::vector<Cell> v;
    for (int i = 0; i < 25; ++i) v.push_back(std::to_string(i));
    EXPECT_EQ(infer_column_kinds(column_dataset(v)).columns[0].kind, ColumnKind::numerical);
    v.resize(19);  // 19 distinct integers is still below the threshold
    EXPECT_EQ(infer_column_kinds(column_dataset(v)).columns[0].kind, ColumnKind::categorical);
    v.push_back("19");
    EXPECT_EQ(infer_column_kinds(column_dataset(v)).columns[0].kind, ColumnKind::numerical);
}

TEST(InferKinds, FractionalValuesAreNumerical) {
    EXPECT_EQ(infer_column_kinds(column_dataset({"0.5", "1.5"})).columns[0].kind, ColumnKind::numerical);
}

TEST(InferKinds, TokensAndAllMissingAreCategorical) {
    EXPECT_EQ(infer_column_kinds(column_dataset({"red", "1.5"})).columns[0].kind, ColumnKind::categorical);
    EXPECT_EQ(infer_column_kinds(column_dataset({Cell{}, Cell{}})).columns[0].kind, ColumnKind::categorical);
}

TEST(InferKinds, MissingValuesDoNotCount) {
    EXPECT_EQ(infer_column_kinds(column_dataset({"1", Cell{}, "2"})).columns[0].kind, ColumnKind::categorical);
}

TEST(InferKinds, IdempotentAndOrderIndependent) {
    Rng rng(7);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<Cell> v;
        const auto n = 5 + uniform_index(rng, 40);
        const auto alphabet = 1 + uniform_index(rng, 30);
        const bool frac = uniform_index(rng, 4) == 0;
        for (std::size_t i = 0; i < n; ++i) {
            if (uniform_index(rng, 10) == 0) {
                v.emplace_back();
            } else {
                const auto x = uniform_index(rng, alphabet);
                v.emplace_back(frac ? std::to_string(x + 0.5) : std::to_string(x));
            }
        }
        const auto once = infer_column_kinds(column_dataset(v));
        EXPECT_EQ(infer_column_kinds(once).columns, once.columns);
        auto shuffled = v;
        shuffle(rng, shuffled);
        EXPECT_EQ(infer_column_kinds(column_dataset(shuffled)).columns, once.columns);
    }
}

namespace {

Dataset labeled_dataset(const std::vector<std::size_t>& class_sizes) {
    Dataset ds;
    ds.name = "synthetic";
    ds.columns = {{"x", ColumnKind::numerical, KindSource::inferred}};
    for (std::size_t c = 0; c < class_sizes.size(); ++c) {
        ds.class_names.push_back("c" + std::to_string(c));
        for (std::size_t i = 0; i < class_sizes[c]; ++i) {
            ds.rows.push_back({std::to_string(ds.rows.size())});
            ds.labels.push_back(c);
        }
    }
    return ds;
}

}  // namespace

TEST(Subsample, IdentityBelowCap) {
    const auto ds = labeled_dataset({75, 75});
    const auto out = subsample(ds, 10000, 1);
    EXPECT_EQ(out.rows, ds.rows);
}

TEST(Subsample, CapsToExactSizeDeterministically) {
    const auto ds = labeled_dataset({40000, 5211});
    const auto a = subsample(ds, 10000, 3);
    EXPECT_EQ(a.size(), 10000u);
    EXPECT_EQ(subsample_indices(ds.size(), 10000, 3), subsample_indices(ds.size(), 10000, 3));
    EXPECT_NE(subsample_indices(ds.size(), 10000, 3), subsample_indices(ds.size(), 10000, 4));
    // Order preserving and bit-identical rows.
    const auto idx = subsample_indices(ds.size(), 10000, 3);
    EXPECT_TRUE(std::is_sorted(idx.begin(), idx.end()));
    for (std::size_t i = 0; i < idx.size(); i += 97) {
        EXPECT_EQ(a.rows[i], ds.rows[idx[i]]);
        EXPECT_EQ(a.labels[i], ds.labels[idx[i]]);
    }
}

TEST(Subsample, CapBelowClassCountRejected) {
    EXPECT_THROW(subsample(labeled_dataset({3, 3, 3}), 2, 0), InvalidArgument);
}

TEST(StratifiedSplit, FiveFiveAtThirtyPercent) {
    const auto split = stratified_split(labeled_dataset({5, 5}), 0.3, 11);
    EXPECT_EQ(split.test_indices.size(), 3u);
    EXPECT_EQ(split.pool_indices.size(), 7u);
    EXPECT_EQ(stratified_test_counts({5, 5}, 0.3), (std::vector<std::size_t>{2, 1}));
}

TEST(StratifiedSplit, TwoInstanceClassGivesOneTestRow) {
    EXPECT_EQ(stratified_test_counts({2, 50}, 0.3), (std::vector<std::size_t>{1, 15}));
    const auto ds = labeled_dataset({2, 50});
    const auto split = stratified_split(ds, 0.3, 5);
    std::size_t class0_test = 0;
    for (auto i : split.test_indices) class0_test += ds.labels[i] == 0;
    EXPECT_EQ(class0_test, 1u);
}

TEST(StratifiedSplit, RejectsSingletonClassAndBadFraction) {
    EXPECT_THROW(stratified_split(labeled_dataset({1, 10}), 0.3, 0), DataError);
    EXPECT_THROW(stratified_split(labeled_dataset({5, 5}), 0.0, 0), InvalidArgument);
}

TEST(StratifiedSplit, Deterministic) {
    const auto ds = labeled_dataset({30, 20, 7});
    const auto a = stratified_split(ds, 0.3, 42);
    const auto b = stratified_split(ds, 0.3, 42);
    EXPECT_EQ(a.pool_indices, b.pool_indices);
    EXPECT_EQ(a.test_indices, b.test_indices);
    EXPECT_NE(a.test_indices, stratified_split(ds, 0.3, 43).test_indices);
}

TEST(StratifiedSplit, PartitionAndStratificationProperty) {
    Rng rng(2024);
    for (int trial = 0; trial < 200; ++trial) {
        const auto K = 2 + uniform_index(rng, 5);
        std::vector<std::size_t> sizes;
        for (std::size_t c = 0; c < K; ++c) sizes.push_back(2 + uniform_index(rng, 60));
        const auto ds = labeled_dataset(sizes);
        const double f = 0.05 + 0.9 * uniform_real(rng);
        const auto split = stratified_split(ds, f, rng());

        std::vector<int> seen(ds.size(), 0);
        for (auto i : split.pool_indices) ++seen[i];
        for (auto i : split.test_indices) ++seen[i];
        ASSERT_TRUE(std::all_of(seen.begin(), seen.end(), [](int s) { return s == 1; }));

        std::vector<std::size_t> test_per_class(K, 0), pool_per_class(K, 0);
        for (auto i : split.test_indices) ++test_per_class[ds.labels[i]];
        for (auto i : split.pool_indices) ++pool_per_class[ds.labels[i]];
        const auto expected = stratified_test_counts(sizes, f);
        for (std::size_t c = 0; c < K; ++c) {
            EXPECT_GE(pool_per_class[c], 1u);
            EXPECT_GE(test_per_class[c], 1u);
            EXPECT_EQ(test_per_class[c], expected[c]);
            const double exact = f * static_cast<double>(sizes[c]);
            const bool clamped = test_per_class[c] == 1 || test_per_class[c] == sizes[c] - 1;
            if (!clamped) {
                EXPECT_LT(std::abs(static_cast<double>(test_per_class[c]) - exact), 1.0);
            }
        }
    }
}

TEST(CompactClasses, DropsEmptyClasses) {
    auto ds = labeled_dataset({3, 3, 3});
    const auto sub = compact_classes(subset(ds, {0, 1, 6, 7}));
    EXPECT_EQ(sub.class_names, (std::vector<std::string>{"c0", "c2"}));
    EXPECT_EQ(sub.labels, (std::vector<std::size_t>{0, 0, 1, 1}));
}
