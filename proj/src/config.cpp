#include "feddadil/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <vector>

#include "feddadil/data_io.hpp"

namespace feddadil {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) out.push_back(trim(item));
  return out;
}

[[noreturn]] void bad(const std::string& key, const std::string& what) { throw ConfigError(key + ": " + what); }

double to_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto* end = v.data() + v.size();
  const auto res = std::from_chars(v.data(), end, out);
  if (v.empty() || res.ec != std::errc() || res.ptr != end || !std::isfinite(out)) {
    bad(key, "expected a finite number, got '" + v + "'");
  }
  return out;
}

long long to_int(const std::string& key, const std::string& v, long long lo, long long hi) {
  long long out = 0;
  const auto* end = v.data() + v.size();
  const auto res = std::from_chars(v.data(), end, out);
  if (v.empty() || res.ec != std::errc() || res.ptr != end) bad(key, "expected an integer, got '" + v + "'");
  if (out < lo || out > hi) bad(key, "value " + v + " out of range [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
  return out;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto* end = v.data() + v.size();
  const auto res = std::from_chars(v.data(), end, out);
  if (v.empty() || res.ec != std::errc() || res.ptr != end) bad(key, "expected an unsigned integer, got '" + v + "'");
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true") return true;
  if (v == "false") return false;
  bad(key, "expected true or false, got '" + v + "'");
}

std::vector<double> to_list(const std::string& key, const std::string& v) {
  std::vector<double> out;
  for (const auto& item : split(v, ',')) out.push_back(to_double(key, item));
  return out;
}

std::string num(double v) { return format_double(v); }

std::string join(const std::vector<double>& v, const char* sep = ", ") {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? sep : "") + num(v[i]);
  return out;
}

using Setter = std::function<void(ExperimentConfig&, const std::string& key, const std::string& value)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"run.seed", [](auto& c, auto& k, auto& v) { c.seed = to_u64(k, v); }},

      {"dictionary.atoms", [](auto& c, auto& k, auto& v) { c.num_atoms = to_int(k, v, 1, 1000); }},
      {"dictionary.atom_size", [](auto& c, auto& k, auto& v) { c.atom_size = to_int(k, v, 1, 1 << 20); }},
      {"dictionary.atom_batch", [](auto& c, auto& k, auto& v) { c.atom_batch = to_int(k, v, 1, 1 << 20); }},
      {"dictionary.init_scale", [](auto& c, auto& k, auto& v) { c.init_scale = to_double(k, v); }},
      {"dictionary.label_noise", [](auto& c, auto& k, auto& v) { c.label_noise = to_double(k, v); }},

      {"training.rounds", [](auto& c, auto& k, auto& v) { c.rounds = to_int(k, v, 1, 1000000); }},
      {"training.local_epochs", [](auto& c, auto& k, auto& v) { c.local_epochs = to_int(k, v, 1, 100000); }},
      {"training.learning_rate", [](auto& c, auto& k, auto& v) { c.learning_rate = to_double(k, v); }},
      {"training.alpha_learning_rate",
       [](auto& c, auto& k, auto& v) {
         c.alpha_learning_rate = v == "auto" ? std::nullopt : std::optional<double>(to_double(k, v));
       }},
      {"training.random_alpha_init", [](auto& c, auto& k, auto& v) { c.random_alpha_init = to_bool(k, v); }},
      {"training.local_batch", [](auto& c, auto& k, auto& v) { c.local_batch = to_int(k, v, 1, 1 << 20); }},
      {"training.batches_per_epoch",
       [](auto& c, auto& k, auto& v) { c.batches_per_epoch = static_cast<int>(to_int(k, v, 1, 1000000)); }},
      {"training.client_fraction", [](auto& c, auto& k, auto& v) { c.client_fraction = to_double(k, v); }},
      {"training.label_weight",
       [](auto& c, auto& k, auto& v) {
         c.label_weight = v == "auto" ? std::nullopt : std::optional<double>(to_double(k, v));
       }},
      {"training.schedule",
       [](auto& c, auto& k, auto& v) {
         if (v != "constant" && v != "cosine") bad(k, "expected constant or cosine, got '" + v + "'");
         c.cosine_schedule = v == "cosine";
       }},
      {"training.transport",
       [](auto& c, auto& k, auto& v) {
         if (v != "inproc" && v != "stream") bad(k, "expected inproc or stream, got '" + v + "'");
         c.transport = v == "stream" ? TransportKind::Stream : TransportKind::InProcess;
       }},
      {"training.eval_size", [](auto& c, auto& k, auto& v) { c.eval_size = to_int(k, v, 1, 1 << 20); }},
      {"training.track_drift", [](auto& c, auto& k, auto& v) { c.track_drift = to_bool(k, v); }},
      {"training.record_wallclock", [](auto& c, auto& k, auto& v) { c.record_wallclock = to_bool(k, v); }},

      {"barycenter.iterations", [](auto& c, auto& k, auto& v) { c.barycenter_iterations = to_int(k, v, 1, 10000); }},
      {"barycenter.solver",
       [](auto& c, auto& k, auto& v) {
         if (v != "exact" && v != "entropic") bad(k, "expected exact or entropic, got '" + v + "'");
         c.inner_solver = v == "entropic" ? SolverKind::Entropic : SolverKind::Exact;
       }},

      {"data.source",
       [](auto& c, auto& k, auto& v) {
         if (v != "synthetic" && v != "csv") bad(k, "expected synthetic or csv, got '" + v + "'");
         c.data.kind = v == "csv" ? DataSpec::Kind::Csv : DataSpec::Kind::Synthetic;
       }},
      {"data.domains", [](auto& c, auto& k, auto& v) { c.data.synthetic.n_domains = to_int(k, v, 2, 1000); }},
      {"data.classes", [](auto& c, auto& k, auto& v) { c.data.synthetic.classes = to_int(k, v, 2, 100000); }},
      {"data.dim", [](auto& c, auto& k, auto& v) { c.data.synthetic.dim = to_int(k, v, 2, 1 << 20); }},
      {"data.samples", [](auto& c, auto& k, auto& v) { c.data.synthetic.samples_per_domain = to_int(k, v, 1, 1 << 24); }},
      {"data.rotations", [](auto& c, auto& k, auto& v) { c.data.synthetic.rotation_deg = to_list(k, v); }},
      {"data.noise", [](auto& c, auto& k, auto& v) { c.data.synthetic.noise = to_list(k, v); }},
      {"data.translations",
       [](auto& c, auto& k, auto& v) {
         c.data.synthetic.translation.clear();
         for (const auto& vec : split(v, ';')) c.data.synthetic.translation.push_back(to_list(k, vec));
       }},
      {"data.class_radius", [](auto& c, auto& k, auto& v) { c.data.synthetic.class_radius = to_double(k, v); }},
      {"data.class_spread", [](auto& c, auto& k, auto& v) { c.data.synthetic.class_spread = to_double(k, v); }},
      {"data.target", [](auto& c, auto& k, auto& v) { c.data.synthetic.target_domain = to_int(k, v, 0, 1000); }},
      {"data.csv_path", [](auto& c, auto&, auto& v) { c.data.csv.path = v; }},
      {"data.csv_domain_column", [](auto& c, auto&, auto& v) { c.data.csv.domain_column = v; }},
      {"data.csv_label_column", [](auto& c, auto&, auto& v) { c.data.csv.label_column = v; }},
      {"data.csv_target", [](auto& c, auto&, auto& v) { c.data.csv.target = v; }},

      {"classifier.epochs", [](auto& c, auto& k, auto& v) { c.classifier.epochs = to_int(k, v, 0, 1000000); }},
      {"classifier.learning_rate", [](auto& c, auto& k, auto& v) { c.classifier.lr = to_double(k, v); }},
  };
  return table;
}

// Maps validation messages ("rounds: ...") back to the dotted key.
std::string qualified(const std::string& short_key) {
  for (const auto& [key, _] : setters()) {
    if (key.substr(key.find('.') + 1) == short_key) return key;
  }
  return short_key;
}

}  // namespace

ExperimentConfig parse_config(std::istream& in, const std::string& source) {
  ExperimentConfig cfg;
  std::string section;
  std::set<std::string> seen;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto where = source + ":" + std::to_string(lineno);
    const auto t = trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    if (t.front() == '[') {
      if (t.back() != ']') throw ConfigError(where + ": malformed section header");
      section = trim(t.substr(1, t.size() - 2));
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected key = value");
    const auto key = (section.empty() ? "" : section + ".") + trim(t.substr(0, eq));
    const auto value = trim(t.substr(eq + 1));
    const auto it = setters().find(key);
    if (it == setters().end()) throw ConfigError(where + ": unknown key '" + key + "'");
    if (!seen.insert(key).second) throw ConfigError(where + ": duplicate key '" + key + "'");
    try {
      it->second(cfg, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(where + ": " + e.what());
    }
  }
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    const auto colon = msg.find(':');
    throw ConfigError(source + ": " + qualified(msg.substr(0, colon)) + msg.substr(colon));
  }
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  return parse_config(in, path.string());
}

std::string format_config(const ExperimentConfig& c) {
  std::ostringstream o;
  const auto& s = c.data.synthetic;
  o << "[run]\nseed = " << c.seed << "\n\n";
  o << "[dictionary]\natoms = " << c.num_atoms << "\natom_size = " << c.atom_size << "\natom_batch = " << c.atom_batch
    << "\ninit_scale = " << num(c.init_scale) << "\nlabel_noise = " << num(c.label_noise) << "\n\n";
  o << "[training]\nrounds = " << c.rounds << "\nlocal_epochs = " << c.local_epochs
    << "\nlearning_rate = " << num(c.learning_rate) << "\n";
  o << "alpha_learning_rate = " << (c.alpha_learning_rate ? num(*c.alpha_learning_rate) : "auto") << "\n";
  o << "random_alpha_init = " << (c.random_alpha_init ? "true" : "false") << "\nlocal_batch = " << c.local_batch << "\n";
  if (c.batches_per_epoch) o << "batches_per_epoch = " << *c.batches_per_epoch << "\n";
  o << "client_fraction = " << num(c.client_fraction) << "\n";
  o << "label_weight = " << (c.label_weight ? num(*c.label_weight) : "auto") << "\n";
  o << "schedule = " << (c.cosine_schedule ? "cosine" : "constant")
    << "\ntransport = " << (c.transport == TransportKind::Stream ? "stream" : "inproc")
    << "\neval_size = " << c.eval_size << "\ntrack_drift = " << (c.track_drift ? "true" : "false")
    << "\nrecord_wallclock = " << (c.record_wallclock ? "true" : "false") << "\n\n";
  o << "[barycenter]\niterations = " << c.barycenter_iterations
    << "\nsolver = " << (c.inner_solver == SolverKind::Entropic ? "entropic" : "exact") << "\n\n";
  o << "[data]\nsource = " << (c.data.kind == DataSpec::Kind::Csv ? "csv" : "synthetic") << "\n";
  o << "domains = " << s.n_domains << "\nclasses = " << s.classes << "\ndim = " << s.dim
    << "\nsamples = " << s.samples_per_domain << "\nrotations = " << join(s.rotation_deg)
    << "\nnoise = " << join(s.noise) << "\n";
  if (!s.translation.empty()) {
    o << "translations = ";
    for (std::size_t i = 0; i < s.translation.size(); ++i) o << (i ? "; " : "") << join(s.translation[i]);
    o << "\n";
  }
  o << "class_radius = " << num(s.class_radius) << "\nclass_spread = " << num(s.class_spread)
    << "\ntarget = " << s.target_domain << "\n";
  if (c.data.kind == DataSpec::Kind::Csv) {
    o << "csv_path = " << c.data.csv.path << "\ncsv_domain_column = " << c.data.csv.domain_column
      << "\ncsv_label_column = " << c.data.csv.label_column << "\ncsv_target = " << c.data.csv.target << "\n";
  }
  o << "\n[classifier]\nepochs = " << c.classifier.epochs << "\nlearning_rate = " << num(c.classifier.lr) << "\n";
  return o.str();
}

std::string target_domain_name(const ExperimentConfig& cfg) {
  if (cfg.data.kind == DataSpec::Kind::Csv) return cfg.data.csv.target;
  return "domain" + std::to_string(cfg.data.synthetic.target_domain);
}

}  // namespace feddadil
