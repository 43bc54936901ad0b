#pragma once

#include <string>
#include <vector>

namespace sparsestab::cli {

/// Distinct k values present in a margin-study CSV, in order of appearance.
std::vector<long> margin_csv_ks(const std::string& csv);

/// Margin-versus-s plot for one k: a polyline per lambda and a dot at the
/// observed sparsity level. Reads nothing but the CSV text, so a plot can
/// always be regenerated from the table. Throws DataError on malformed CSV.
std::string render_margin_svg(const std::string& csv, long k);

}  // namespace sparsestab::cli
