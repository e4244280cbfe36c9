#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "meshgen/metrics.hpp"
#include "meshgen/text.hpp"

namespace meshgen::cli {

using KeyValues = std::vector<std::pair<std::string, std::string>>;

std::filesystem::path make_out_dir(const std::string& dir);
std::string format_value(double v);
void write_key_values(const std::filesystem::path& path, const KeyValues& kv);
// Aligned two-column table for the terminal.
std::string render_table(const KeyValues& kv);

text::NegationRules load_negation_rules(const std::string& cue_file);

void append_report(KeyValues& kv, const std::string& prefix, const metrics::ClassificationReport& r);

metrics::UndefinedPolicy parse_policy(const std::string& s);

// Indices of the listed terms in the index; unknown terms are warned about.
std::vector<std::size_t> term_columns(const std::vector<std::string>& terms, const text::TermIndex& index);

}  // namespace meshgen::cli
