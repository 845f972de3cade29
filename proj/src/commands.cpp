#include "feddadil/commands.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

#include "feddadil/config.hpp"
#include "feddadil/data_io.hpp"
#include "json.hpp"

namespace feddadil {

namespace fs = std::filesystem;

fs::path run_layout::alpha_file(const fs::path& run, int client_id) {
  return run / "clients" / ("alpha_" + std::to_string(client_id) + ".csv");
}

namespace {

void write_text(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::trunc);
  if (!out) throw DataError("cannot write " + p.string());
  out << text;
}

void require(const fs::path& p) {
  if (!fs::exists(p)) throw DataError("missing run artifact " + p.string());
}

std::vector<std::string> cells(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string c;
  while (std::getline(ss, c, ',')) out.push_back(c);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

LoadedDomains load_run_data(const ExperimentConfig& cfg, const fs::path& run) {
  auto loaded = load_csv_domains(run / run_layout::kData, "domain", "label", target_domain_name(cfg));
  if (!loaded.target_truth.empty()) throw DataError("run data must not carry target labels");
  return loaded;
}

}  // namespace

void cmd_generate(const ExperimentConfig& cfg, const fs::path& run) {
  cfg.validate();
  write_text(run / run_layout::kConfig, format_config(cfg));
  std::vector<ClientDataset> clients;
  std::vector<int> truth;
  if (cfg.data.kind == DataSpec::Kind::Synthetic) {
    auto data = generate_synthetic(cfg.data.synthetic, cfg.seed);
    clients = std::move(data.domains);
    truth = std::move(data.target_truth);
  } else {
    const auto& c = cfg.data.csv;
    auto loaded = load_csv_domains(c.path, c.domain_column, c.label_column, c.target);
    clients = std::move(loaded.clients);
    truth = std::move(loaded.target_truth);
  }
  write_domains_csv(run / run_layout::kData, clients);
  if (!truth.empty()) write_labels_csv(run / run_layout::kTruth, truth);
}

TrainingOutcome cmd_train(const ExperimentConfig& cfg, const fs::path& run) {
  cfg.validate();
  if (!fs::exists(run / run_layout::kData)) cmd_generate(cfg, run);
  write_text(run / run_layout::kConfig, format_config(cfg));
  const auto data = load_run_data(cfg, run);
  auto outcome = run_federated_training(cfg, data.clients);

  std::ostringstream m;
  m << "round,client_id,local_loss,drift,wallclock_ms\n";
  for (const auto& r : outcome.history) {
    for (const auto& [id, loss] : r.client_losses) m << r.round << "," << id << "," << format_double(loss) << ",,\n";
    m << r.round << ",global," << format_double(r.global_loss) << ","
      << (r.drift ? format_double(*r.drift) : "") << "," << (r.wallclock_ms ? format_double(*r.wallclock_ms) : "")
      << "\n";
  }
  write_text(run / run_layout::kMetrics, m.str());
  write_dictionary(run / run_layout::kDictionary, outcome.dictionary);

  std::ostringstream index;
  index << "id,name,role\n";
  for (const auto& [id, alpha] : outcome.alphas) {
    const auto& c = data.clients[static_cast<std::size_t>(id)];
    index << id << "," << c.name << "," << (c.role == DomainRole::Target ? "target" : "source") << "\n";
    write_alpha_csv(run_layout::alpha_file(run, id), alpha);
  }
  write_text(run / run_layout::kClientIndex, index.str());
  return outcome;
}

AdaptationScores cmd_eval(const fs::path& run) {
  for (const char* f : {run_layout::kConfig, run_layout::kData, run_layout::kDictionary, run_layout::kTruth,
                        run_layout::kClientIndex}) {
    require(run / f);
  }
  const auto cfg = load_config(run / run_layout::kConfig);
  const auto data = load_run_data(cfg, run);
  const auto truth = read_labels_csv(run / run_layout::kTruth);
  const auto dict = read_dictionary(run / run_layout::kDictionary);

  int target = -1;
  for (std::size_t i = 0; i < data.clients.size(); ++i) {
    if (data.clients[i].role == DomainRole::Target) target = static_cast<int>(i);
  }
  require(run_layout::alpha_file(run, target));
  const auto alpha_t = read_alpha_csv(run_layout::alpha_file(run, target));
  if (truth.size() != static_cast<std::size_t>(data.clients[static_cast<std::size_t>(target)].size())) {
    throw DataError("target label file does not match the target rows");
  }
  const auto scores = evaluate_adaptation(cfg, dict, alpha_t, data.clients, truth);

  nlohmann::ordered_json j;
  j["source_only"] = scores.source_only;
  j["feddadil_r"] = scores.reconstruction;
  j["feddadil_e"] = scores.ensemble;
  write_text(run / "eval.json", j.dump(2) + "\n");

  fs::create_directories(run / "models");
  std::ofstream so(run / "models" / "source_only.bin", std::ios::binary | std::ios::trunc);
  source_only(data.clients, cfg.classifier).save(so);
  return scores;
}

std::vector<GlobalRound> read_global_metrics(const fs::path& metrics_csv) {
  require(metrics_csv);
  std::ifstream in(metrics_csv);
  std::string line;
  std::getline(in, line);
  if (line != "round,client_id,local_loss,drift,wallclock_ms") throw DataError(metrics_csv.string() + ": bad header");
  std::vector<GlobalRound> out;
  while (std::getline(in, line)) {
    const auto c = cells(line);
    if (c.size() != 5) throw DataError(metrics_csv.string() + ": malformed row '" + line + "'");
    if (c[1] != "global") continue;
    GlobalRound g;
    g.round = static_cast<std::uint32_t>(std::stoul(c[0]));
    g.dil_loss = std::stod(c[2]);
    if (!c[3].empty()) g.drift = std::stod(c[3]);
    out.push_back(g);
  }
  return out;
}

DriftSummary cmd_drift(const fs::path& run) {
  const auto rows = read_global_metrics(run / run_layout::kMetrics);
  DriftSummary s;
  for (const auto& r : rows) {
    if (!r.drift) continue;
    s.rounds.push_back(r.round);
    s.drift.push_back(*r.drift);
  }
  if (s.drift.size() < 2) throw DataError("drift needs at least two rounds with recorded drift");

  std::size_t early = 0;
  for (std::size_t i = 0; i < s.rounds.size(); ++i) {
    if (s.rounds[i] <= 10) {
      s.early_mean += s.drift[i];
      ++early;
    }
  }
  if (early > 0) s.early_mean /= static_cast<double>(early);

  const std::size_t skip = s.drift.size() / 4;
  std::vector<double> x, y;
  for (std::size_t i = skip; i < s.drift.size(); ++i) {
    x.push_back(s.rounds[i]);
    y.push_back(s.drift[i]);
  }
  s.late_slope = theil_sen_slope(x, y);

  std::ostringstream csv;
  csv << "round,drift\n";
  for (std::size_t i = 0; i < s.rounds.size(); ++i) csv << s.rounds[i] << "," << format_double(s.drift[i]) << "\n";
  write_text(run / "drift.csv", csv.str());
  nlohmann::ordered_json j;
  j["mean_drift_rounds_1_10"] = s.early_mean;
  j["theil_sen_slope_last_75pct"] = s.late_slope;
  write_text(run / "drift.json", j.dump(2) + "\n");
  return s;
}

std::vector<fs::path> cmd_figdata(const fs::path& dir) {
  std::vector<fs::path> runs;
  if (fs::exists(dir / run_layout::kMetrics)) {
    runs.push_back(dir);
  } else if (fs::is_directory(dir)) {
    for (const auto& e : fs::directory_iterator(dir)) {
      if (e.is_directory() && fs::exists(e.path() / run_layout::kMetrics)) runs.push_back(e.path());
    }
    std::sort(runs.begin(), runs.end());
  }
  if (runs.empty()) throw DataError("no completed runs under " + dir.string());

  std::map<int, fs::path> by_epochs;
  for (const auto& r : runs) {
    require(r / run_layout::kConfig);
    const int e = load_config(r / run_layout::kConfig).local_epochs;
    if (!by_epochs.emplace(e, r).second) {
      throw DataError("runs " + by_epochs[e].string() + " and " + r.string() + " share E = " + std::to_string(e));
    }
  }

  std::vector<fs::path> written;
  for (const auto& [e, r] : by_epochs) {
    const auto rows = read_global_metrics(r / run_layout::kMetrics);
    std::ostringstream loss, drift;
    loss << "round,dil_loss\n";
    drift << "round,drift\n";
    for (const auto& g : rows) {
      loss << g.round << "," << format_double(g.dil_loss) << "\n";
      drift << g.round << "," << (g.drift ? format_double(*g.drift) : "") << "\n";
    }
    const auto base = dir / "figdata";
    written.push_back(base / ("dil_loss_E" + std::to_string(e) + ".csv"));
    write_text(written.back(), loss.str());
    written.push_back(base / ("drift_E" + std::to_string(e) + ".csv"));
    write_text(written.back(), drift.str());
  }
  return written;
}

}  // namespace feddadil
