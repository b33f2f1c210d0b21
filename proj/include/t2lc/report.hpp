#pragma once

// CSV output for training histories, variant comparisons and parameter
// counts. Every file has one header row; reals are written with %.17g so a
// parse of the emitted text reproduces the values exactly.
//
//   history:    epoch,lr,train_loss,train_accuracy,test_accuracy,wall_seconds
//   compare:    variant,groups,seed,final_train_loss,final_train_accuracy,final_test_accuracy,status
//   summary:    variant,groups,runs,mean_train_loss,mean_test_accuracy
//   paramcount: layer,role,total,per_processor
//
// Text fields never contain commas; status strings have them replaced by ';'.
// Readers skip lines starting with '#', which the CLI uses for run metadata.

#include <iosfwd>
#include <string>
#include <vector>

#include "t2lc/model_zoo.hpp"
#include "t2lc/train_harness.hpp"

namespace t2lc::report {

std::string format_real(double v);         // %.17g
std::string format_sig(double v, int digits = 4);

void write_history_csv(std::ostream& os, const train::History& history);
std::vector<train::EpochRecord> read_history_csv(std::istream& is);

void write_compare_csv(std::ostream& os, const std::vector<train::CompareRow>& rows);
std::vector<train::CompareRow> read_compare_csv(std::istream& is);

void write_summary_csv(std::ostream& os, const std::vector<train::CompareSummary>& summary);

void write_paramcount_csv(std::ostream& os, const zoo::ParamCount& count);
std::vector<zoo::LayerCount> read_paramcount_csv(std::istream& is);

}  // namespace t2lc::report
