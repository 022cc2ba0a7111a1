#include <fstream>
#include <future>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "pfrnet/harness.hpp"

namespace pfrnet {
namespace {

std::string lambda_label(double v) {
  std::ostringstream out;
  out << v;
  return out.str();
}

SweepRow run_row(const TrainConfig& base, double value, const std::filesystem::path& dir,
                 const std::vector<Sample>* eval_set, const std::string& dataset_name) {
  SweepRow row;
  row.lambda = value;
  row.run_dir = dir / ("lambda-" + lambda_label(value));
  try {
    auto config = base;
    config.lambda = value;
    config.validate();
    const auto data = training_data(config);
    TrainOptions opts;
    opts.run_dir = row.run_dir;
    auto result = train(config, data, opts);
    row.report = evaluate_samples(result.net, eval_set ? *eval_set : data, config.resolution, dataset_name,
                                  "lambda=" + lambda_label(value));
    write_report(*row.report, row.run_dir);
  } catch (const std::exception& e) {
    row.error = e.what();
  }
  return row;
}

}  // namespace

std::string SweepTable::text() const {
  std::ostringstream out;
  out << "dataset: " << dataset << '\n';
  out << std::left << std::setw(8) << "lambda" << std::setw(9) << "S_alpha" << std::setw(9) << "E_phi"
      << std::setw(10) << "F_beta_w" << "M" << '\n';
  out << std::fixed << std::setprecision(3);
  for (const auto& r : rows) {
    out << std::setw(8) << lambda_label(r.lambda);
    if (r.report) {
      out << std::setw(9) << round3(r.report->s_alpha) << std::setw(9) << round3(r.report->e_phi) << std::setw(10)
          << round3(r.report->f_beta_w) << round3(r.report->mae) << '\n';
    } else {
      out << "error: " << r.error << '\n';
    }
  }
  return out.str();
}

std::string SweepTable::csv() const {
  std::ostringstream out;
  out << "dataset,lambda,s_alpha,e_phi,f_beta_w,mae,error\n" << std::fixed << std::setprecision(3);
  for (const auto& r : rows) {
    out << dataset << ',' << lambda_label(r.lambda) << ',';
    if (r.report) {
      out << round3(r.report->s_alpha) << ',' << round3(r.report->e_phi) << ',' << round3(r.report->f_beta_w) << ','
          << round3(r.report->mae) << ",\n";
    } else {
      auto msg = r.error;
      for (auto& ch : msg) {
        if (ch == ',' || ch == '\n') ch = ' ';
      }
      out << ",,,," << msg << '\n';
    }
  }
  return out.str();
}

SweepTable sweep_lambda(const TrainConfig& base, const std::vector<double>& values, const SweepOptions& options) {
  if (values.empty()) throw std::invalid_argument("sweep_lambda: values must not be empty");
  const auto dir = options.out_dir.empty() ? make_run_dir(base, "sweep-") : options.out_dir;
  std::filesystem::create_directories(dir);

  std::vector<Sample> eval_set;
  SweepTable table;
  if (!base.eval_data.empty()) {
    eval_set = load_dataset(base.eval_data);
    table.dataset = std::filesystem::path(base.eval_data).filename().string();
  } else {
    table.dataset = base.data.empty() ? "synthetic" : std::filesystem::path(base.data).filename().string();
  }
  const auto* eval_ptr = base.eval_data.empty() ? nullptr : &eval_set;

  const auto jobs = static_cast<size_t>(std::max(1, options.jobs));
  for (size_t first = 0; first < values.size(); first += jobs) {
    std::vector<std::future<SweepRow>> pending;
    for (size_t k = first; k < std::min(values.size(), first + jobs); ++k) {
      pending.push_back(std::async(jobs > 1 ? std::launch::async : std::launch::deferred, run_row, std::cref(base),
                                   values[k], std::cref(dir), eval_ptr, std::cref(table.dataset)));
    }
    for (auto& f : pending) {
      table.rows.push_back(f.get());
      const auto& row = table.rows.back();
      if (options.progress) {
        *options.progress << "lambda " << lambda_label(row.lambda) << (row.report ? " done" : " failed: " + row.error)
                          << '\n';
      }
    }
  }
  std::ofstream(dir / "sweep.txt") << table.text();
  std::ofstream(dir / "sweep.csv") << table.csv();
  return table;
}

}  // namespace pfrnet
