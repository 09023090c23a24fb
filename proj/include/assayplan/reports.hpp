#pragma once

#include <string>

#include "assayplan/ensemble.hpp"
#include "assayplan/synthetic.hpp"
#include "json.hpp"

namespace assayplan {

inline constexpr int kReportSchemaVersion = 1;

/// Steps with votes, cumulative costs and the H/L trace.
nlohmann::json mlasp_json(const Mlasp& mlasp, const Environment& env);

/// step,action,votes,fraction,abstentions
std::string votes_csv(const Mlasp& mlasp, const Environment& env);
std::string votes_csv(const VoteHistogram& histogram, const Environment& env);

/// tolerance,spend,first_batch,terminal_H,constraint_met,dominated,on_front
std::string pareto_csv(const ParetoResult& result, const Environment& env);
nlohmann::json pareto_json(const ParetoResult& result, const Environment& env);

/// One row per trial, in the layout of a trial-by-trial alignment table.
std::string alignment_csv(const AlignmentReport& report);
nlohmann::json alignment_summary_json(const AlignmentReport& report);

/// Quotes a CSV field when it holds a comma, quote or newline.
std::string csv_field(const std::string& s);

}  // namespace assayplan
