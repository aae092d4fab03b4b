#include "csconf/tensor_io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "csconf/error.hpp"

namespace csconf {

namespace {

constexpr char kMagic[4] = {'P', 'C', 'T', '1'};

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T value) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>(value >> (8 * i)));
}

template <typename T>
T get_le(const std::uint8_t* p) {
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(p[i]) << (8 * i);
  return v;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::string cur;
  for (char ch : s) {
    if (ch == sep) {
      parts.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  parts.push_back(cur);
  return parts;
}

}  // namespace

std::vector<std::uint8_t> encode_tensor(const Tensor& t) {
  std::vector<std::uint8_t> out;
  out.reserve(8 + 8 * t.ndim() + 4 * t.size());
  out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.ndim()));
  for (auto d : t.shape()) put_le<std::uint64_t>(out, d);
  for (float v : t.data()) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
  return out;
}

Tensor decode_tensor(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kMagic, 4) != 0) throw FormatError("not a PCT1 tensor (bad magic)");
  const auto ndim = get_le<std::uint32_t>(bytes.data() + 4);
  if (ndim == 0) throw FormatError("PCT1 tensor with zero dimensions");
  std::size_t offset = 8;
  if (bytes.size() < offset + 8ull * ndim) throw FormatError("PCT1 header truncated");
  std::vector<std::uint64_t> shape(ndim);
  std::uint64_t count = 1;
  for (auto& d : shape) {
    d = get_le<std::uint64_t>(bytes.data() + offset);
    offset += 8;
    if (d == 0) throw FormatError("PCT1 tensor has a zero-sized dimension");
    if (count > (std::uint64_t{1} << 40) / d) throw FormatError("PCT1 tensor too large");
    count *= d;
  }
  const std::size_t need = offset + 4 * count;
  if (bytes.size() < need) throw FormatError("PCT1 payload truncated");
  if (bytes.size() > need) throw FormatError("PCT1 file has trailing bytes");
  std::vector<float> data(count);
  for (auto& v : data) {
    v = std::bit_cast<float>(get_le<std::uint32_t>(bytes.data() + offset));
    offset += 4;
    if (!std::isfinite(v)) throw FormatError("PCT1 payload contains NaN or Inf");
  }
  return Tensor(std::move(shape), std::move(data));
}

void write_tensor(const Tensor& t, const std::filesystem::path& path) {
  const auto bytes = encode_tensor(t);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed: " + path.string());
}

Tensor read_tensor(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_tensor(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

std::vector<int> labels_from_tensor(const Tensor& t) {
  std::vector<int> out;
  out.reserve(t.size());
  for (float v : t.data()) {
    const double r = std::round(static_cast<double>(v));
    if (std::abs(static_cast<double>(v) - r) > 1e-6) throw DataError("label tensor holds a non-integral value");
    if (r < 0) throw DataError("label tensor holds a negative value");
    out.push_back(static_cast<int>(r));
  }
  return out;
}

Tensor labels_to_tensor(std::span<const int> labels, std::vector<std::uint64_t> shape) {
  std::vector<float> data(labels.begin(), labels.end());
  return Tensor(std::move(shape), std::move(data));
}

std::string_view role_name(Role role) { return role == Role::Validation ? "validation" : "target"; }

Role parse_role(std::string_view name) {
  if (name == "validation") return Role::Validation;
  if (name == "target") return Role::Target;
  throw FormatError("unknown manifest role '" + std::string(name) + "'");
}

Manifest parse_manifest(const std::string& text) {
  Manifest m;
  bool have_role = false, have_task = false, have_count = false, in_entries = false;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::string t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto where = " (manifest line " + std::to_string(line_no) + ")";
    if (line.find('\t') != std::string::npos) {
      in_entries = true;
      const auto f = split(line, '\t');
      if (f.size() != 3 || f[0].empty() || f[1].empty() || f[2].empty()) {
        throw FormatError("entry needs exactly three tab-separated fields" + where);
      }
      ManifestEntry e{f[0], f[1], std::nullopt};
      if (f[2] != "-") e.labels = f[2];
      m.entries.push_back(std::move(e));
      continue;
    }
    if (in_entries) throw FormatError("header line after entries" + where);
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw FormatError("expected key=value" + where);
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    if (key == "role" && !have_role) {
      m.role = parse_role(value);
      have_role = true;
    } else if (key == "task" && !have_task) {
      try {
        m.task = parse_task(value);
      } catch (const ArgumentError& e) {
        throw FormatError(e.what() + where);
      }
      have_task = true;
    } else if (key == "class_count" && !have_count) {
      std::size_t used = 0;
      try {
        m.class_count = std::stoi(value, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != value.size() || m.class_count < 2) throw FormatError("class_count must be an integer >= 2" + where);
      have_count = true;
    } else {
      throw FormatError("unknown or repeated header key '" + key + "'" + where);
    }
  }
  if (!have_role || !have_task || !have_count) throw FormatError("manifest header needs role, task and class_count");
  if (m.entries.empty()) throw FormatError("manifest lists no entries");
  return m;
}

std::string format_manifest(const Manifest& m) {
  std::ostringstream out;
  out << "role=" << role_name(m.role) << '\n';
  out << "task=" << task_name(m.task) << '\n';
  out << "class_count=" << m.class_count << '\n';
  for (const auto& e : m.entries) {
    out << e.id << '\t' << e.logits.generic_string() << '\t' << (e.labels ? e.labels->generic_string() : "-") << '\n';
  }
  return out.str();
}

std::filesystem::path resolve_manifest_path(const std::filesystem::path& path) {
  if (std::filesystem::is_directory(path)) return path / "manifest.txt";
  return path;
}

LoadedManifest load_manifest(const std::filesystem::path& path) {
  const auto file = resolve_manifest_path(path);
  std::ifstream in(file);
  if (!in) throw DataError("cannot open manifest " + file.string());
  std::stringstream buf;
  buf << in.rdbuf();

  LoadedManifest out;
  out.manifest = parse_manifest(buf.str());
  const Manifest& m = out.manifest;
  const auto base = file.parent_path();
  const auto resolve = [&](const std::filesystem::path& p) { return p.is_absolute() ? p : base / p; };

  Dataset& d = out.data;
  d.id = file.parent_path().filename().string();
  if (d.id.empty()) d.id = file.stem().string();
  d.task = m.task;
  d.class_count = m.class_count;

  for (const auto& e : m.entries) {
    if (m.role == Role::Validation && !e.labels) {
      throw DataError("validation manifest entry '" + e.id + "' has no labels");
    }
    const Tensor logits = read_tensor(resolve(e.logits));
    std::optional<Tensor> labels;
    if (e.labels) labels = read_tensor(resolve(*e.labels));
    const std::uint64_t class_dim =
        m.task == Task::Classification ? (logits.ndim() == 2 ? logits.dim(1) : 0) : logits.dim(0);
    if (class_dim != static_cast<std::uint64_t>(m.class_count)) {
      throw DataError("entry '" + e.id + "' has class dimension " + std::to_string(class_dim) +
                      " but manifest declares class_count=" + std::to_string(m.class_count));
    }
    const Tensor* lp = labels ? &*labels : nullptr;
    if (m.task == Task::Classification) {
      d.sets.push_back(PredictionSet::from_tensors(logits, lp));
    } else {
      d.cases.push_back(SegCase::from_tensors(logits, lp));
    }
    d.entry_ids.push_back(e.id);
  }
  return out;
}

std::filesystem::path write_dataset(const Dataset& data, Role role, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  Manifest m;
  m.role = role;
  m.task = data.task;
  m.class_count = data.class_count;
  const std::size_t n = data.task == Task::Classification ? data.sets.size() : data.cases.size();
  if (data.entry_ids.size() != n) throw ArgumentError("dataset entry ids do not match entries");
  for (std::size_t i = 0; i < n; ++i) {
    const auto& id = data.entry_ids[i];
    if (id.empty() || id.find_first_of("\t\n/\\") != std::string::npos) throw ArgumentError("invalid entry id '" + id + "'");
    const Tensor logits = data.task == Task::Classification ? data.sets[i].logits_tensor() : data.cases[i].logits_tensor();
    const std::optional<Tensor> labels =
        data.task == Task::Classification ? data.sets[i].labels_tensor() : data.cases[i].labels_tensor();
    ManifestEntry e{id, id + ".logits.pct", std::nullopt};
    write_tensor(logits, dir / e.logits);
    if (labels) {
      e.labels = id + ".labels.pct";
      write_tensor(*labels, dir / *e.labels);
    }
    m.entries.push_back(std::move(e));
  }
  const auto path = dir / "manifest.txt";
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << format_manifest(m);
  return path;
}

}  // namespace csconf
