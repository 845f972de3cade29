#include "feddadil/data_io.hpp"

#include <bit>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "feddadil/synthetic.hpp"

namespace feddadil {

namespace {

std::vector<std::string> split_cells(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    const auto b = cell.find_first_not_of(" \t\r");
    const auto e = cell.find_last_not_of(" \t\r");
    out.push_back(b == std::string::npos ? "" : cell.substr(b, e - b + 1));
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::ifstream open_in(const std::filesystem::path& p, std::ios::openmode mode = std::ios::in) {
  std::ifstream in(p, mode);
  if (!in) throw DataError("cannot open " + p.string());
  return in;
}

std::ofstream open_out(const std::filesystem::path& p, std::ios::openmode mode = std::ios::out) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(p, mode | std::ios::trunc);
  if (!out) throw DataError("cannot write " + p.string());
  return out;
}

bool parse_double(const std::string& s, double& out) {
  const auto* end = s.data() + s.size();
  const auto res = std::from_chars(s.data(), end, out);
  return !s.empty() && res.ec == std::errc() && res.ptr == end && std::isfinite(out);
}

bool parse_int(const std::string& s, int& out) {
  const auto* end = s.data() + s.size();
  const auto res = std::from_chars(s.data(), end, out);
  return !s.empty() && res.ec == std::errc() && res.ptr == end;
}

std::string f32_text(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", static_cast<double>(static_cast<float>(v)));
  return buf;
}

void put_u32(std::ostream& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.put(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::ostream& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.put(static_cast<char>((bits >> (8 * i)) & 0xff));
}

std::uint64_t get_le(std::istream& in, int bytes, const std::string& name) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) {
    const int c = in.get();
    if (c == std::char_traits<char>::eof()) throw DataError(name + ": truncated");
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(c)) << (8 * i);
  }
  return v;
}

constexpr char kDictMagic[4] = {'F', 'D', 'D', 'D'};
constexpr std::uint32_t kDictVersion = 1;

}  // namespace

std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

LoadedDomains load_csv_domains(const std::filesystem::path& path, const std::string& domain_column,
                               const std::string& label_column, const std::string& target_domain) {
  auto in = open_in(path);
  const auto where = [&](std::size_t row) { return path.string() + ":" + std::to_string(row); };
  std::string line;
  if (!std::getline(in, line)) throw DataError(path.string() + ": empty file");
  const auto header = split_cells(line);
  int domain_idx = -1, label_idx = -1;
  std::vector<std::size_t> feature_idx;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (header[c] == domain_column) {
      domain_idx = static_cast<int>(c);
    } else if (header[c] == label_column) {
      label_idx = static_cast<int>(c);
    } else {
      feature_idx.push_back(c);
    }
  }
  if (domain_idx < 0) throw DataError(where(1) + ": missing domain column '" + domain_column + "'");
  if (label_idx < 0) throw DataError(where(1) + ": missing label column '" + label_column + "'");
  if (feature_idx.empty()) throw DataError(where(1) + ": no feature columns");

  struct Rows {
    std::vector<std::vector<double>> x;
    std::vector<int> y;  // -1 when blank
  };
  std::vector<std::string> order;
  std::map<std::string, Rows> by_domain;
  int max_label = -1;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto cells = split_cells(line);
    if (cells.size() != header.size()) {
      throw DataError(where(row) + ": expected " + std::to_string(header.size()) + " cells, found " +
                      std::to_string(cells.size()));
    }
    const auto& dom = cells[static_cast<std::size_t>(domain_idx)];
    if (dom.empty()) throw DataError(where(row) + ": empty domain in column '" + domain_column + "'");
    if (!by_domain.count(dom)) order.push_back(dom);
    auto& r = by_domain[dom];
    std::vector<double> x;
    for (auto c : feature_idx) {
      double v = 0.0;
      if (!parse_double(cells[c], v)) {
        throw DataError(where(row) + ": column '" + header[c] + "': not a finite number: '" + cells[c] + "'");
      }
      x.push_back(v);
    }
    int y = -1;
    const auto& label_cell = cells[static_cast<std::size_t>(label_idx)];
    if (!label_cell.empty()) {
      if (!parse_int(label_cell, y) || y < 0) {
        throw DataError(where(row) + ": column '" + label_column + "': not a class index: '" + label_cell + "'");
      }
      max_label = std::max(max_label, y);
    } else if (dom != target_domain) {
      throw DataError(where(row) + ": column '" + label_column + "': source row without a label");
    }
    r.x.push_back(std::move(x));
    r.y.push_back(y);
  }
  if (!by_domain.count(target_domain)) throw DataError(path.string() + ": unknown target domain '" + target_domain + "'");
  if (max_label < 0) throw DataError(path.string() + ": no labeled rows");

  LoadedDomains out;
  out.num_classes = max_label + 1;
  for (const auto& name : order) {
    const auto& r = by_domain[name];
    ClientDataset ds;
    ds.name = name;
    ds.features.resize(static_cast<Eigen::Index>(r.x.size()), static_cast<Eigen::Index>(feature_idx.size()));
    for (std::size_t i = 0; i < r.x.size(); ++i) {
      for (std::size_t j = 0; j < feature_idx.size(); ++j) {
        ds.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = r.x[i][j];
      }
    }
    if (name == target_domain) {
      ds.role = DomainRole::Target;
      const bool any = std::any_of(r.y.begin(), r.y.end(), [](int y) { return y >= 0; });
      const bool all = std::all_of(r.y.begin(), r.y.end(), [](int y) { return y >= 0; });
      if (any && !all) throw DataError(path.string() + ": target domain is only partly labeled");
      if (all) out.target_truth = r.y;
    } else {
      ds.role = DomainRole::Source;
      ds.labels = one_hot(r.y, out.num_classes);
    }
    out.clients.push_back(std::move(ds));
  }
  return out;
}

void write_domains_csv(const std::filesystem::path& path, const std::vector<ClientDataset>& clients) {
  if (clients.empty()) throw DataError("write_domains_csv: no datasets");
  auto out = open_out(path);
  const auto d = clients.front().features.cols();
  out << "domain,label";
  for (Eigen::Index j = 0; j < d; ++j) out << ",x" << j;
  out << "\n";
  for (const auto& c : clients) {
    if (c.features.cols() != d) throw DataError("write_domains_csv: inconsistent feature dimension");
    std::vector<int> y;
    if (c.labels) y = argmax_rows(*c.labels);
    for (Eigen::Index i = 0; i < c.size(); ++i) {
      out << c.name << ",";
      if (c.role == DomainRole::Source && c.labels) out << y[static_cast<std::size_t>(i)];
      for (Eigen::Index j = 0; j < d; ++j) out << "," << f32_text(c.features(i, j));
      out << "\n";
    }
  }
}

void write_labels_csv(const std::filesystem::path& path, const std::vector<int>& labels) {
  auto out = open_out(path);
  out << "label\n";
  for (int y : labels) out << y << "\n";
}

std::vector<int> read_labels_csv(const std::filesystem::path& path) {
  auto in = open_in(path);
  std::string line;
  if (!std::getline(in, line) || line != "label") throw DataError(path.string() + ": expected a 'label' header");
  std::vector<int> out;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    int y = 0;
    if (!parse_int(line, y)) throw DataError(path.string() + ":" + std::to_string(row) + ": not a class index");
    out.push_back(y);
  }
  return out;
}

void write_dictionary(const std::filesystem::path& path, const Dictionary& dict) {
  dict.validate();
  auto out = open_out(path, std::ios::binary);
  out.write(kDictMagic, 4);
  put_u32(out, kDictVersion);
  put_u32(out, static_cast<std::uint32_t>(dict.num_atoms()));
  put_u32(out, static_cast<std::uint32_t>(dict.atom_size()));
  put_u32(out, static_cast<std::uint32_t>(dict.dim()));
  put_u32(out, static_cast<std::uint32_t>(dict.num_classes()));
  put_u32(out, dict.tag.round);
  for (const auto& a : dict.atoms) {
    for (Eigen::Index i = 0; i < a.features.size(); ++i) put_f64(out, a.features.data()[i]);
    for (Eigen::Index i = 0; i < a.labels.size(); ++i) put_f64(out, a.labels.data()[i]);
  }
}

Dictionary read_dictionary(const std::filesystem::path& path) {
  auto in = open_in(path, std::ios::binary);
  const auto name = path.string();
  char magic[4];
  if (!in.read(magic, 4) || !std::equal(magic, magic + 4, kDictMagic)) throw DataError(name + ": not a dictionary file");
  if (get_le(in, 4, name) != kDictVersion) throw DataError(name + ": unsupported dictionary version");
  const auto k = get_le(in, 4, name), n = get_le(in, 4, name), d = get_le(in, 4, name), nc = get_le(in, 4, name);
  Dictionary dict;
  dict.tag.round = static_cast<std::uint32_t>(get_le(in, 4, name));
  for (std::uint64_t a = 0; a < k; ++a) {
    Atom atom;
    atom.id = static_cast<int>(a);
    atom.features.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
    atom.labels.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(nc));
    for (Eigen::Index i = 0; i < atom.features.size(); ++i) atom.features.data()[i] = std::bit_cast<double>(get_le(in, 8, name));
    for (Eigen::Index i = 0; i < atom.labels.size(); ++i) atom.labels.data()[i] = std::bit_cast<double>(get_le(in, 8, name));
    dict.atoms.push_back(std::move(atom));
  }
  if (in.peek() != std::char_traits<char>::eof()) throw DataError(name + ": trailing bytes");
  dict.validate();
  return dict;
}

void write_alpha_csv(const std::filesystem::path& path, const BarycentricCoordinates& alpha) {
  auto out = open_out(path);
  out << "atom,weight\n";
  for (std::size_t k = 0; k < alpha.size(); ++k) out << k << "," << format_double(alpha[k]) << "\n";
}

BarycentricCoordinates read_alpha_csv(const std::filesystem::path& path) {
  auto in = open_in(path);
  std::string line;
  std::getline(in, line);
  std::vector<double> w;
  while (std::getline(in, line)) {
    const auto cells = split_cells(line);
    double v = 0.0;
    if (cells.size() != 2 || !parse_double(cells[1], v)) throw DataError(path.string() + ": malformed weight row");
    w.push_back(v);
  }
  return BarycentricCoordinates(std::move(w));
}

}  // namespace feddadil
