#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace crm {

enum class TreatmentKind { continuous_scalar, token_sequence };
enum class OutcomeKind { real, binary };
enum class Split : std::uint8_t { train, val, test };

std::string to_string(TreatmentKind k);
std::string to_string(OutcomeKind k);
std::string to_string(Split s);
Split parse_split(std::string_view s);

// A treatment is either a continuous scalar or a fixed-length token sequence.
struct Treatment {
  double value = 0.0;
  std::vector<int> tokens;

  static Treatment scalar(double v) { return Treatment{v, {}}; }
  static Treatment sequence(std::vector<int> toks) { return Treatment{0.0, std::move(toks)}; }

  bool is_sequence() const { return !tokens.empty(); }
  auto operator<=>(const Treatment&) const = default;
};

std::string to_string(const Treatment& t);

// Mixed-radix index of a token/confounder cell; position 0 is most significant.
std::size_t cell_index(std::span<const int> digits, std::span<const int> radix);
std::vector<int> cell_digits(std::size_t index, std::span<const int> radix);
std::size_t cell_count(std::span<const int> radix);

struct Dataset {
  TreatmentKind treatment_kind = TreatmentKind::continuous_scalar;
  OutcomeKind outcome_kind = OutcomeKind::real;

  std::size_t x_dim = 0;
  std::vector<double> x;        // n * x_dim, row-major
  std::vector<int> x_vocab;     // per-dimension cardinality; empty for real X

  std::vector<int> t_vocab;     // per-position vocabulary; empty for scalar T
  std::vector<double> t_value;  // n, scalar treatments
  std::vector<int> t_tokens;    // n * t_vocab.size(), token treatments

  std::vector<double> y;
  std::vector<Split> split;

  std::size_t size() const { return y.size(); }
  std::size_t t_len() const { return t_vocab.size(); }
  bool discrete_x() const { return !x_vocab.empty(); }

  std::span<const double> x_row(std::size_t i) const {
    return {x.data() + i * x_dim, x_dim};
  }
  std::span<const int> tokens(std::size_t i) const {
    return {t_tokens.data() + i * t_len(), t_len()};
  }
  Treatment treatment(std::size_t i) const;

  // Compact key: token-cell index for sequences; not defined for scalars.
  std::size_t treatment_id(std::size_t i) const;
  std::size_t x_cell(std::size_t i) const;

  std::vector<std::size_t> rows(Split s) const;
  std::vector<std::size_t> all_rows() const;

  // Checks array lengths, binary outcomes and token ranges.
  void validate() const;
};

// Rows grouped by identical treatment, ordered by treatment.
struct TreatmentGroup {
  Treatment treatment;
  std::vector<std::size_t> rows;
};
std::vector<TreatmentGroup> group_by_treatment(const Dataset& d, std::span<const std::size_t> rows);

// A training design: one entry per distinct input cell with a multiplicity.
// With no aggregation every row is its own cell of count 1.
enum class Aggregation { none, treatment, treatment_and_x, x };

struct Design {
  std::vector<std::size_t> representative;  // dataset row standing in for the cell
  std::vector<double> count;
  std::vector<std::size_t> member_offset;   // CSR offsets into members
  std::vector<std::size_t> members;

  std::size_t size() const { return representative.size(); }
  std::span<const std::size_t> cell_members(std::size_t c) const {
    return {members.data() + member_offset[c], member_offset[c + 1] - member_offset[c]};
  }
  // Count-weighted mean of a per-dataset-row quantity over each cell.
  std::vector<double> cell_mean(std::span<const double> per_row) const;
};

Design make_design(const Dataset& d, std::span<const std::size_t> rows, Aggregation agg);

// Dataset CSV: header x_0..x_{d-1},t_0..t_{m-1},y,split; metadata in a
// sidecar "<path>.meta" (inferred from the values when absent).
void write_dataset(const Dataset& d, const std::filesystem::path& path);
Dataset read_dataset(const std::filesystem::path& path);

}  // namespace crm
