#pragma once

// Plain-text and binary artifacts of a run.
//
// Domain CSV: a header row, then one row per sample. Cells are separated by
// commas and never quoted. One column names the domain, one holds the integer
// class index (blank when unknown), every other column is a numeric feature.

#include <filesystem>
#include <string>
#include <vector>

#include "feddadil/dictionary.hpp"

namespace feddadil {

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct LoadedDomains {
  std::vector<ClientDataset> clients;  ///< in order of first appearance
  /// Target labels found in the file (empty when the target rows are unlabeled).
  std::vector<int> target_truth;
  int num_classes = 0;
};

/// One dataset per distinct domain value; the target is stripped of labels.
LoadedDomains load_csv_domains(const std::filesystem::path& path, const std::string& domain_column,
                               const std::string& label_column, const std::string& target_domain);

/// Writes `domain,label,x0,...`; target rows get a blank label. Values are
/// printed with float32 precision.
void write_domains_csv(const std::filesystem::path& path, const std::vector<ClientDataset>& clients);

void write_labels_csv(const std::filesystem::path& path, const std::vector<int>& labels);
std::vector<int> read_labels_csv(const std::filesystem::path& path);

/// "FDDD", u32 version, u32 K, n_atom, d, n_c, round, then per atom the
/// features and labels as f64, all little-endian.
void write_dictionary(const std::filesystem::path& path, const Dictionary& dict);
Dictionary read_dictionary(const std::filesystem::path& path);

void write_alpha_csv(const std::filesystem::path& path, const BarycentricCoordinates& alpha);
BarycentricCoordinates read_alpha_csv(const std::filesystem::path& path);

/// Shortest decimal text that parses back to the same double.
std::string format_double(double v);

}  // namespace feddadil
