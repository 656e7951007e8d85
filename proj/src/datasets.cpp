#include "maiscope/datasets.hpp"

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include "maiscope/random.hpp"

namespace maiscope {

namespace pt = boost::property_tree;
using nlohmann::json;

namespace {

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoFailure, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const pt::ptree& child(const pt::ptree& node, const char* path) {
  const auto found = node.get_child_optional(path);
  if (!found) throw Error(ErrorCode::kSchemaError, std::string("missing <") + path + ">");
  return *found;
}

int integer_field(const pt::ptree& node, const char* path) {
  const std::string text = child(node, path).get_value<std::string>();
  std::size_t used = 0;
  double value = 0;
  try {
    value = std::stod(text, &used);
  } catch (const std::exception&) {
    throw Error(ErrorCode::kSchemaError, std::string("<") + path + "> is not a number: '" + text + "'");
  }
  while (used < text.size() && std::isspace(static_cast<unsigned char>(text[used]))) ++used;
  if (used != text.size() || !std::isfinite(value)) {
    throw Error(ErrorCode::kSchemaError, std::string("<") + path + "> is not a number: '" + text + "'");
  }
  return static_cast<int>(std::lround(value));
}

bool is_image_file(const std::filesystem::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" || ext == ".ppm" || ext == ".pnm";
}

}  // namespace

CellClass parse_voc_class_name(std::string_view name) {
  if (name == "RBC") return CellClass::kRbc;
  if (name == "WBC") return CellClass::kWbc;
  if (name == "Platelets" || name == "Platelet") return CellClass::kPlatelet;
  throw Error(ErrorCode::kUnknownClassName, "unknown class name '" + std::string(name) + "'");
}

AnnotatedImage parse_voc_xml(std::string_view xml) {
  pt::ptree tree;
  try {
    std::istringstream in{std::string(xml)};
    pt::read_xml(in, tree, pt::xml_parser::trim_whitespace);
  } catch (const pt::xml_parser_error& e) {
    throw Error(ErrorCode::kSchemaError, std::string("XML parse error: ") + e.message());
  }
  const pt::ptree& root = child(tree, "annotation");

  AnnotatedImage out;
  out.image_path = root.get<std::string>("filename", "");
  const pt::ptree& size = child(root, "size");
  out.width = integer_field(size, "width");
  out.height = integer_field(size, "height");
  if (out.width < 1 || out.height < 1) throw Error(ErrorCode::kSchemaError, "image size must be positive");

  for (const auto& [tag, node] : root) {
    if (tag != "object") continue;
    const CellClass cls = parse_voc_class_name(child(node, "name").get_value<std::string>());
    const pt::ptree& bb = child(node, "bndbox");
    const int xmin = integer_field(bb, "xmin");
    const int ymin = integer_field(bb, "ymin");
    const int xmax = integer_field(bb, "xmax");
    const int ymax = integer_field(bb, "ymax");
    if (xmax < xmin || ymax < ymin) {  // inclusive: xmin == xmax is one pixel wide
      throw Error(ErrorCode::kInvertedBox, "bndbox (" + std::to_string(xmin) + "," + std::to_string(ymin) + "," +
                                               std::to_string(xmax) + "," + std::to_string(ymax) + ")");
    }
    // Some BCCD boxes spill past the image edge by a pixel or two.
    const PixelBox box = clamp_box({ymin - 1, xmin - 1, ymax, xmax}, out.width, out.height);
    if (box.area() == 0) throw Error(ErrorCode::kInvertedBox, "bndbox lies outside the image");
    out.objects.push_back({cls, box});
  }
  return out;
}

AnnotatedImage load_voc_file(const std::filesystem::path& path) { return parse_voc_xml(read_text_file(path)); }

std::string write_voc_xml(const AnnotatedImage& a) {
  std::ostringstream out;
  out << "<annotation>\n";
  out << "\t<filename>" << a.image_path << "</filename>\n";
  out << "\t<size>\n\t\t<width>" << a.width << "</width>\n\t\t<height>" << a.height
      << "</height>\n\t\t<depth>3</depth>\n\t</size>\n";
  for (const auto& o : a.objects) {
    const std::string_view name = o.cls == CellClass::kPlatelet ? "Platelets" : to_string(o.cls);
    out << "\t<object>\n\t\t<name>" << name << "</name>\n\t\t<bndbox>\n";
    out << "\t\t\t<xmin>" << o.box.left + 1 << "</xmin>\n";
    out << "\t\t\t<ymin>" << o.box.top + 1 << "</ymin>\n";
    out << "\t\t\t<xmax>" << o.box.right << "</xmax>\n";
    out << "\t\t\t<ymax>" << o.box.bottom << "</ymax>\n";
    out << "\t\t</bndbox>\n\t</object>\n";
  }
  out << "</annotation>\n";
  return out.str();
}

std::vector<NamedAnnotation> load_voc_directory(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw Error(ErrorCode::kIoFailure, "not a directory: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".xml") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<NamedAnnotation> out;
  out.reserve(files.size());
  for (const auto& f : files) out.push_back({f.stem().string(), load_voc_file(f)});
  return out;
}

std::string_view to_string(CropLabel label) noexcept {
  return label == CropLabel::kParasitized ? "Parasitized" : "Uninfected";
}

ClassificationDataset load_classification_dataset(const std::filesystem::path& root) {
  ClassificationDataset ds;
  for (const CropLabel label : {CropLabel::kParasitized, CropLabel::kUninfected}) {
    const auto dir = root / std::string(to_string(label));
    if (!std::filesystem::is_directory(dir)) continue;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
      if (entry.is_regular_file() && is_image_file(entry.path())) ds.items.push_back({entry.path(), label});
    }
  }
  if (ds.items.empty()) throw Error(ErrorCode::kEmptyDataset, "no images under " + root.string());
  std::sort(ds.items.begin(), ds.items.end(),
            [](const LabeledCrop& a, const LabeledCrop& b) { return a.image_path < b.image_path; });
  for (const auto& item : ds.items) {
    (item.label == CropLabel::kParasitized ? ds.parasitized : ds.uninfected) += 1;
  }
  return ds;
}

std::array<std::size_t, 3> split_sizes(std::size_t n, const SplitFractions& f) {
  const double sum = f.train + f.val + f.test;
  if (f.train < 0 || f.val < 0 || f.test < 0 || std::abs(sum - 1.0) > 1e-9) {
    throw Error(ErrorCode::kBadFractions, "split fractions must be non-negative and sum to 1");
  }
  // The epsilon absorbs representation error such as 10 * 0.1.
  const auto portion = [n](double fraction) {
    return static_cast<std::size_t>(std::floor(static_cast<double>(n) * fraction + 1e-9));
  };
  const std::size_t val = portion(f.val);
  const std::size_t test = portion(f.test);
  return {n - val - test, val, test};
}

std::vector<std::size_t> seeded_permutation(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  SeededRng rng(seed);
  for (std::size_t i = n; i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.below(i));
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

std::vector<RawDetection> oracle_detections(const AnnotatedImage& annotation) {
  std::vector<RawDetection> out;
  out.reserve(annotation.objects.size());
  for (const auto& o : annotation.objects) {
    out.push_back({o.cls, 1.0, normalize_box(o.box, annotation.width, annotation.height)});
  }
  return out;
}

json to_json(const InfectionSidecar& sidecar) {
  json cells = json::array();
  for (const auto& c : sidecar.cells) {
    json j = {{"object", c.object_index}, {"parasitized", c.parasitized}};
    if (c.p_infected) j["p_infected"] = *c.p_infected;
    cells.push_back(std::move(j));
  }
  return {{"image", sidecar.image}, {"cells", std::move(cells)}};
}

InfectionSidecar infection_sidecar_from_json(const json& j) {
  try {
    InfectionSidecar s;
    s.image = j.value("image", "");
    for (const auto& c : j.at("cells")) {
      InfectionLabel label;
      label.object_index = c.at("object").get<std::size_t>();
      label.parasitized = c.at("parasitized").get<bool>();
      if (c.contains("p_infected")) label.p_infected = c["p_infected"].get<double>();
      s.cells.push_back(label);
    }
    return s;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kSchemaError, std::string("infection sidecar: ") + e.what());
  }
}

InfectionSidecar load_infection_sidecar(const std::filesystem::path& path) {
  try {
    return infection_sidecar_from_json(json::parse(read_text_file(path)));
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::kSchemaError, path.string() + ": " + e.what());
  }
}

OracleClassifier oracle_classifier_for_slide(const RasterImage& slide, const AnnotatedImage& annotation,
                                             const InfectionSidecar& sidecar) {
  OracleClassifier oracle;
  for (const auto& label : sidecar.cells) {
    if (label.object_index >= annotation.objects.size()) {
      throw Error(ErrorCode::kSchemaError, "sidecar refers to object " + std::to_string(label.object_index));
    }
    const AnnotatedObject& obj = annotation.objects[label.object_index];
    if (obj.cls != CellClass::kRbc) throw Error(ErrorCode::kSchemaError, "sidecar labels a non-RBC object");
    // Same path the pipeline takes: normalize, map back, crop the original.
    const PixelBox box = denormalize_box(normalize_box(obj.box, annotation.width, annotation.height),
                                         slide.width(), slide.height());
    oracle.add(resize(crop(slide, box), kClassifierInputSize, kClassifierInputSize), label.probability());
  }
  return oracle;
}

OracleClassifier oracle_classifier_for_dataset(const ClassificationDataset& dataset) {
  OracleClassifier oracle;
  for (const auto& item : dataset.items) {
    const RasterImage img = load_image(item.image_path);
    oracle.add(resize(img, kClassifierInputSize, kClassifierInputSize),
               item.label == CropLabel::kParasitized ? 1.0 : 0.0);
  }
  return oracle;
}

}  // namespace maiscope
