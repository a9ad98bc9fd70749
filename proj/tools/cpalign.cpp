// Copyright 2026 The cpalign Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// cpalign command line: gen, run, sweep, bench, check and config.

#include "cpalign/domain/domain.hpp"
#include "cpalign/numerics/random.hpp"
#include "cpalign/numerics/weights_io.hpp"
#include "cpalign/sim/complexity.hpp"
#include "cpalign/sim/io.hpp"
#include "cpalign/sim/pipeline.hpp"
#include "criteria.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iomanip>
#include <iostream>
#include <sstream>

namespace
{

using namespace cpalign;

struct Common
{
  std::string config;
  std::string scenario;
  std::string weights;
  std::string output;
};

void add_common(CLI::App * cmd, Common & c, bool with_pipeline)
{
  cmd->add_option("--config", c.config, "JSON config file (absent keys keep defaults)")->check(CLI::ExistingFile);
  if (with_pipeline) {
    cmd->add_option("--scenario", c.scenario, "scenario JSON from `gen` instead of the config template")
      ->check(CLI::ExistingFile);
    cmd->add_option("--weights", c.weights, "weight archive; defaults to seeded analytic weights")
      ->check(CLI::ExistingFile);
  }
}

sim::HarnessConfig load(const Common & c)
{
  return c.config.empty() ? sim::HarnessConfig{} : sim::load_config(c.config);
}

sim::Scenario scenario_for(const Common & c, const sim::HarnessConfig & cfg)
{
  return c.scenario.empty() ? sim::generate_scenario(cfg.scenario) : sim::load_scenario(c.scenario);
}

sim::Pipeline pipeline_for(const Common & c, const sim::HarnessConfig & cfg, const sim::Scenario & s)
{
  if (c.weights.empty()) return sim::Pipeline::analytic(s.seed, cfg.bev, cfg.ifam);
  return sim::Pipeline::from_archive(numerics::load_archive(c.weights), cfg.bev);
}

void emit(const std::string & path, const std::string & text)
{
  if (path.empty() || path == "-") {
    std::cout << text;
  } else {
    sim::write_text(path, text);
  }
}

std::string pgm_name(const char * what, double t)
{
  std::ostringstream s;
  s << what << "_t" << std::fixed << std::setprecision(2) << t << ".pgm";
  return s.str();
}

}  // namespace

int main(int argc, char ** argv)
{
  CLI::App app{"cpalign: delay- and domain-aware collaborative perception harness"};
  app.require_subcommand(1);

  // gen
  Common gen_c;
  std::string save_weights;
  auto * gen = app.add_subcommand("gen", "generate a scenario and write it as JSON");
  add_common(gen, gen_c, false);
  gen->add_option("-o,--output", gen_c.output, "output path (default stdout)");
  gen->add_option("--save-weights", save_weights, "also write the seeded analytic weight archive here");

  // run
  Common run_c;
  double tau_ms = 0.0, sigma_local = 0.0, sigma_head = 0.0;
  std::vector<double> times = {1.6};
  std::string pgm_dir, codec_name;
  bool no_ptam = false, no_phd = false;
  auto * run = app.add_subcommand("run", "run the pipeline on one or more ego frames and write a JSON report");
  add_common(run, run_c, true);
  run->add_option("--tau-ms", tau_ms, "transmission delay in ms")->check(CLI::NonNegativeNumber);
  run->add_option("--sigma-local", sigma_local, "collaborator position noise in m")->check(CLI::NonNegativeNumber);
  run->add_option("--sigma-head", sigma_head, "collaborator heading noise in degrees")->check(CLI::NonNegativeNumber);
  run->add_option("--t", times, "ego frame times in s (repeatable)")->capture_default_str();
  run->add_option("--codec", codec_name, "identity, fp16 or int8 (overrides the config)");
  run->add_flag("--no-ptam", no_ptam, "transmit the latest frame without compensation");
  run->add_flag("--no-phd", no_phd, "skip proximal-region hierarchical downsampling on the ego");
  run->add_option("--pgm-dir", pgm_dir, "write fused, ego and collaborator foreground maps as PGM here");
  run->add_option("-o,--output", run_c.output, "report path (default stdout)");

  // sweep
  Common sweep_c;
  std::size_t sweep_threads = 0;
  bool threads_given = false;
  auto * sweep = app.add_subcommand("sweep", "delay / noise grid, with and without compensation, as CSV");
  add_common(sweep, sweep_c, true);
  auto * threads_opt = sweep->add_option("--threads", sweep_threads, "worker threads, 0 = all cores");
  sweep->add_option("-o,--output", sweep_c.output, "CSV path (default stdout)");

  // bench
  std::size_t channels = 64, height = 256, width = 128, window = 16;
  bool instrumented = false;
  std::string bench_out;
  auto * bench = app.add_subcommand("bench", "similarity operation counts, global vs blockwise, as JSON");
  bench->add_option("--channels", channels)->capture_default_str()->check(CLI::PositiveNumber);
  bench->add_option("--height", height)->capture_default_str()->check(CLI::PositiveNumber);
  bench->add_option("--width", width)->capture_default_str()->check(CLI::PositiveNumber);
  bench->add_option("--window", window)->capture_default_str()->check(CLI::PositiveNumber);
  bench->add_flag("--instrumented", instrumented, "also execute the loss and compare its multiplication counter");
  bench->add_option("-o,--output", bench_out, "JSON path (default stdout)");

  // check
  acceptance::SuiteOptions suite;
  std::string sweep_csv;
  auto * check = app.add_subcommand("check", "run the full acceptance property suite");
  check->add_option("--threads", suite.threads, "sweep threads, 0 = all cores")->capture_default_str();
  check->add_option("--only", suite.only, "criterion ids to run (repeatable)");
  check->add_option("--sweep-csv", sweep_csv, "write the end-to-end sweep CSV here");

  // config
  Common config_c;
  auto * config = app.add_subcommand("config", "print the effective config with every key spelled out");
  add_common(config, config_c, false);

  CLI11_PARSE(app, argc, argv);
  threads_given = threads_opt->count() > 0;

  try {
    if (gen->parsed()) {
      const auto cfg = load(gen_c);
      const auto s = sim::generate_scenario(cfg.scenario);
      emit(gen_c.output, sim::scenario_to_json(s));
      if (!save_weights.empty()) {
        numerics::WeightArchive archive;
        sim::Pipeline::analytic(s.seed, cfg.bev, cfg.ifam).store(archive);
        numerics::save_archive(save_weights, archive);
      }
    } else if (run->parsed()) {
      const auto cfg = load(run_c);
      const auto s = scenario_for(run_c, cfg);
      const auto pipeline = pipeline_for(run_c, cfg, s);
      auto opt = cfg.run_options();
      opt.tau = tau_ms / 1000.0;
      opt.noise = {sigma_local, sigma_head};
      if (no_ptam) opt.ptam.enabled = false;
      if (no_phd) opt.phd.enabled = false;
      if (!codec_name.empty()) opt.codec.mode = sim::codec_from_string(codec_name);
      const auto report = sim::run_frames(pipeline, s, times, opt);
      emit(run_c.output, sim::report_to_json(report));
      if (!pgm_dir.empty()) {
        std::filesystem::create_directories(pgm_dir);
        const std::filesystem::path dir(pgm_dir);
        for (const auto & f : report.frames) {
          domain::save_pgm(dir / pgm_name("fused", f.t), f.fused_map);
          domain::save_pgm(dir / pgm_name("ego", f.t), f.ego_map);
          domain::save_pgm(dir / pgm_name("collaborator", f.t), f.collaborator_map);
        }
      }
    } else if (sweep->parsed()) {
      auto cfg = load(sweep_c);
      if (threads_given) cfg.sweep.threads = sweep_threads;
      const auto s = scenario_for(sweep_c, cfg);
      const auto pipeline = pipeline_for(sweep_c, cfg, s);
      const auto rows = sim::run_sweep(pipeline, s, cfg.sweep, cfg.run_options());
      std::ostringstream out;
      sim::write_csv(out, rows);
      emit(sweep_c.output, out.str());
    } else if (bench->parsed()) {
      const auto g = sim::count_similarity_ops(channels, height, width, window, sim::SimilarityMode::global);
      const auto b = sim::count_similarity_ops(channels, height, width, window, sim::SimilarityMode::blockwise);
      const double ratio = static_cast<double>(b.mul) / static_cast<double>(g.mul);
      emit(bench_out, sim::ops_to_json(g, b, ratio));
      if (instrumented) {
        auto rng = numerics::make_rng(1);
        const auto x = numerics::random_tensor(channels, height, width, rng, -1.0, 1.0);
        const auto y = numerics::random_tensor(channels, height, width, rng, -1.0, 1.0);
        const auto executed = temporal::temporal_loss(x, y, window).ops.mul;
        std::cerr << "instrumented blockwise multiplications: " << executed
                  << (executed == b.mul ? " (matches closed form)" : " (MISMATCH)") << "\n";
        if (executed != b.mul) return 1;
      }
    } else if (check->parsed()) {
      if (!sweep_csv.empty()) suite.sweep_csv = sweep_csv;
      std::size_t failed = 0, total = 0;
      acceptance::run_suite(suite, [&](const acceptance::CriterionResult & r) {
        std::cout << acceptance::format_result(r) << std::endl;
        ++total;
        failed += !r.passed;
      });
      std::cout << (total - failed) << " / " << total << " criteria passed" << std::endl;
      return failed == 0 ? 0 : 1;
    } else if (config->parsed()) {
      std::cout << sim::dump_config(load(config_c));
    }
  } catch (const sim::ConfigError & e) {
    std::cerr << "cpalign: " << e.what() << "\n";
    return 2;
  } catch (const std::exception & e) {
    std::cerr << "cpalign: error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
