#include <algorithm>
#include <fstream>
#include <set>

#include "doctest.h"
#include "maiscope/datasets.hpp"
#include "maiscope/error.hpp"
#include "maiscope/random.hpp"
#include "test_util.hpp"

using namespace maiscope;
namespace fs = std::filesystem;

namespace {

const fs::path kVoc = fs::path(MAISCOPE_FIXTURES) / "voc";

std::string voc_with(const std::string& name, int xmin, int ymin, int xmax, int ymax) {
  return "<annotation><size><width>50</width><height>40</height></size><object><name>" + name +
         "</name><bndbox><xmin>" + std::to_string(xmin) + "</xmin><ymin>" + std::to_string(ymin) +
         "</ymin><xmax>" + std::to_string(xmax) + "</xmax><ymax>" + std::to_string(ymax) +
         "</ymax></bndbox></object></annotation>";
}

void touch(const fs::path& p) {
  fs::create_directories(p.parent_path());
  std::ofstream(p) << "x";
}

}  // namespace

TEST_CASE("VOC conversion to half-open boxes") {
  const auto a = parse_voc_xml(voc_with("WBC", 1, 1, 10, 10));
  REQUIRE(a.objects.size() == 1);
  CHECK(a.objects[0].cls == CellClass::kWbc);
  CHECK(a.objects[0].box == PixelBox{0, 0, 10, 10});
  CHECK(a.width == 50);
  CHECK(a.height == 40);
}

TEST_CASE("VOC with no objects") {
  const auto a = parse_voc_xml("<annotation><size><width>5</width><height>6</height></size></annotation>");
  CHECK(a.objects.empty());
}

TEST_CASE("VOC class names") {
  CHECK(parse_voc_class_name("RBC") == CellClass::kRbc);
  CHECK(parse_voc_class_name("WBC") == CellClass::kWbc);
  CHECK(parse_voc_class_name("Platelets") == CellClass::kPlatelet);
  CHECK(parse_voc_class_name("Platelet") == CellClass::kPlatelet);
  CHECK_THROWS_CODE(parse_voc_class_name("Basophil"), ErrorCode::kUnknownClassName);
  CHECK_THROWS_CODE(parse_voc_class_name("rbc"), ErrorCode::kUnknownClassName);
  CHECK_THROWS_CODE(parse_voc_xml(voc_with("Basophil", 1, 1, 5, 5)), ErrorCode::kUnknownClassName);
}

TEST_CASE("VOC malformed input") {
  CHECK_THROWS_CODE(parse_voc_xml("<annotation>"), ErrorCode::kSchemaError);
  CHECK_THROWS_CODE(parse_voc_xml(voc_with("RBC", 10, 1, 5, 5)), ErrorCode::kInvertedBox);
  CHECK_THROWS_CODE(parse_voc_xml("<annotation><size><width>5</width></size></annotation>"), ErrorCode::kSchemaError);
  CHECK_THROWS_CODE(parse_voc_xml("<annotation><size><width>5</width><height>x</height></size></annotation>"),
                    ErrorCode::kSchemaError);
}

TEST_CASE("VOC write and parse round-trip") {
  SeededRng rng(14);
  for (int t = 0; t < 50; ++t) {
    AnnotatedImage a;
    a.image_path = "img.ppm";
    a.width = rng.between(10, 700);
    a.height = rng.between(10, 700);
    const int n = rng.between(0, 8);
    for (int i = 0; i < n; ++i) {
      const int top = rng.between(0, a.height - 1), left = rng.between(0, a.width - 1);
      a.objects.push_back({static_cast<CellClass>(rng.below(3)),
                           {top, left, rng.between(top + 1, a.height), rng.between(left + 1, a.width)}});
    }
    CHECK(parse_voc_xml(write_voc_xml(a)) == a);
  }
}

TEST_CASE("VOC fixture corpus parses exactly as expected") {
  std::ifstream in(kVoc / "expected.json");
  REQUIRE(in);
  const auto expected = nlohmann::json::parse(in);
  int files = 0;
  for (const auto& [name, want] : expected.items()) {
    CAPTURE(name);
    ++files;
    if (want.contains("error")) {
      try {
        load_voc_file(kVoc / name);
        FAIL("expected an error");
      } catch (const Error& e) {
        CHECK(error_name(e.code()) == want["error"].get<std::string>());
      }
      continue;
    }
    const auto a = load_voc_file(kVoc / name);
    CHECK(a.width == want["width"].get<int>());
    CHECK(a.height == want["height"].get<int>());
    REQUIRE(a.objects.size() == want["objects"].size());
    for (std::size_t i = 0; i < a.objects.size(); ++i) {
      const auto& w = want["objects"][i];
      CHECK(parse_voc_class_name(w[0].get<std::string>()) == a.objects[i].cls);
      CHECK(a.objects[i].box == PixelBox{w[1].get<int>(), w[2].get<int>(), w[3].get<int>(), w[4].get<int>()});
    }
  }
  CHECK(files == 10);
}

TEST_CASE("VOC directory loading is ordered and fails loudly") {
  TempDir dir;
  std::ofstream(dir / "b.xml") << voc_with("RBC", 1, 1, 5, 5);
  std::ofstream(dir / "a.xml") << voc_with("WBC", 1, 1, 5, 5);
  std::ofstream(dir / "notes.txt") << "ignored";
  const auto all = load_voc_directory(dir.path());
  REQUIRE(all.size() == 2);
  CHECK(all[0].id == "a");
  CHECK(all[1].id == "b");
  CHECK_THROWS_CODE(load_voc_directory(kVoc), ErrorCode::kUnknownClassName);
  CHECK_THROWS_CODE(load_voc_directory(dir / "missing"), ErrorCode::kIoFailure);
}

TEST_CASE("class tree loader") {
  TempDir dir;
  for (const char* f : {"a.png", "b.png", "c.ppm"}) touch(dir / "Parasitized" / f);
  for (const char* f : {"d.png", "e.png"}) touch(dir / "Uninfected" / f);
  touch(dir / "Uninfected" / "nested" / "f.png");
  touch(dir / "Uninfected" / "Thumbs.db");
  const auto ds = load_classification_dataset(dir.path());
  CHECK(ds.items.size() == 5);
  CHECK(ds.parasitized == 3);
  CHECK(ds.uninfected == 2);
  CHECK(std::is_sorted(ds.items.begin(), ds.items.end(),
                       [](const auto& a, const auto& b) { return a.image_path < b.image_path; }));

  TempDir empty;
  CHECK_THROWS_CODE(load_classification_dataset(empty.path()), ErrorCode::kEmptyDataset);
}

TEST_CASE("split sizes") {
  CHECK(split_sizes(10, {0.8, 0.1, 0.1}) == std::array<std::size_t, 3>{8, 1, 1});
  CHECK(split_sizes(364, {0.7, 0.15, 0.15}) == std::array<std::size_t, 3>{256, 54, 54});
  CHECK(split_sizes(0, {}) == std::array<std::size_t, 3>{0, 0, 0});
  CHECK_THROWS_CODE(split_sizes(10, {0.5, 0.1, 0.1}), ErrorCode::kBadFractions);
  CHECK_THROWS_CODE(split_sizes(10, {1.2, -0.1, -0.1}), ErrorCode::kBadFractions);
}

TEST_CASE("split is a seeded partition") {
  std::vector<int> items(10);
  for (int i = 0; i < 10; ++i) items[i] = i;
  const auto s = split_dataset<int>(items, {}, 7);
  CHECK(s.train.size() == 8);
  CHECK(s.val.size() == 1);
  CHECK(s.test.size() == 1);

  SeededRng rng(70);
  for (int t = 0; t < 100; ++t) {
    const int n = rng.between(0, 400);
    std::vector<int> xs(n);
    for (int i = 0; i < n; ++i) xs[i] = i;
    const double val = rng.uniform(0.0, 0.4), test = rng.uniform(0.0, 0.4);
    const SplitFractions f{1.0 - val - test, val, test};
    const std::uint64_t seed = rng.next();
    const auto a = split_dataset<int>(xs, f, seed);
    const auto b = split_dataset<int>(xs, f, seed);
    CHECK(a.train == b.train);
    CHECK(a.val == b.val);
    CHECK(a.test == b.test);
    std::multiset<int> all(a.train.begin(), a.train.end());
    all.insert(a.val.begin(), a.val.end());
    all.insert(a.test.begin(), a.test.end());
    CHECK(all.size() == static_cast<std::size_t>(n));
    CHECK(std::set<int>(all.begin(), all.end()).size() == static_cast<std::size_t>(n));
  }

  std::vector<int> xs(100);
  for (int i = 0; i < 100; ++i) xs[i] = i;
  CHECK(split_dataset<int>(xs, {}, 1).train != split_dataset<int>(xs, {}, 2).train);
}

TEST_CASE("seeded permutation is a permutation") {
  const auto p = seeded_permutation(1000, 3);
  std::vector<std::size_t> sorted = p;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < sorted.size(); ++i) CHECK(sorted[i] == i);
  CHECK(seeded_permutation(1000, 3) == p);
}

TEST_CASE("infection sidecar JSON") {
  InfectionSidecar s;
  s.image = "slide.ppm";
  s.cells.push_back({0, true, std::nullopt});
  s.cells.push_back({2, false, 0.3});
  const auto back = infection_sidecar_from_json(to_json(s));
  CHECK(back.image == "slide.ppm");
  REQUIRE(back.cells.size() == 2);
  CHECK(back.cells[0].probability() == 1.0);
  CHECK(back.cells[1].probability() == 0.3);
  CHECK_THROWS_CODE(infection_sidecar_from_json(nlohmann::json::array()), ErrorCode::kSchemaError);
}

TEST_CASE("oracle detections normalize by annotation size") {
  AnnotatedImage a;
  a.width = 200;
  a.height = 100;
  a.objects.push_back({CellClass::kWbc, {10, 20, 50, 100}});
  const auto raw = oracle_detections(a);
  REQUIRE(raw.size() == 1);
  CHECK(raw[0].score == 1.0);
  CHECK(raw[0].box.top == doctest::Approx(0.1));
  CHECK(raw[0].box.left == doctest::Approx(0.1));
  CHECK(raw[0].box.bottom == doctest::Approx(0.5));
  CHECK(raw[0].box.right == doctest::Approx(0.5));
}
