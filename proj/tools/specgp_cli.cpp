// specgp: run, sweep and compare GP regression experiments from config files.
//
// Exit codes: 0 ok, 1 unexpected error, 2 bad config or input,
// 3 numerical failure, 4 missing dataset.

#include <CLI11.hpp>

#include <filesystem>
#include <functional>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "specgp/experiment.hpp"

#ifndef SPECGP_DEFAULT_DATA_DIR
#define SPECGP_DEFAULT_DATA_DIR "data"
#endif

namespace {

struct Overrides {
  std::optional<std::string> model;
  std::optional<std::string> m;
  std::optional<std::string> alpha;
  std::optional<std::string> beta;
  std::optional<std::string> seed;
  std::optional<std::string> out;
  std::vector<std::string> set;
};

void add_overrides(CLI::App* app, Overrides& o) {
  app->add_option("--model", o.model, "full | tl | hilbert | vfe");
  app->add_option("--m", o.m, "basis size per dimension (also the VFE inducing count)");
  app->add_option("--alpha", o.alpha, "initial alpha (tl)");
  app->add_option("--beta", o.beta, "initial beta (tl)");
  app->add_option("--seed", o.seed, "split seed");
  app->add_option("--out", o.out, "output directory");
  app->add_option("--set", o.set, "extra key=value overrides")->take_all();
}

specgp::Config load_with_overrides(const std::string& path, const Overrides& o) {
  specgp::Config c = specgp::Config::load(path);
  if (o.model) c.set("model", *o.model);
  if (o.m) {
    c.set("basis.m", *o.m);
    c.set("vfe.m", *o.m);
  }
  if (o.alpha) c.set("basis.alpha", *o.alpha);
  if (o.beta) c.set("basis.beta", *o.beta);
  if (o.seed) c.set("seed", *o.seed);
  if (o.out) c.set("out", *o.out);
  for (const auto& kv : o.set) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw specgp::ConfigError("--set expects key=value, got '" + kv + "'");
    c.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  return c;
}

std::vector<int> parse_ints(const std::string& text) {
  std::vector<int> out;
  for (auto f : specgp::detail::split_fields(text, ',')) {
    const auto v = specgp::detail::parse_double(f);
    if (!v || *v < 1 || *v != static_cast<int>(*v)) throw specgp::ConfigError("bad m value '" + std::string(f) + "'");
    out.push_back(static_cast<int>(*v));
  }
  return out;
}

int guarded(const std::function<void()>& body) {
  try {
    body();
    return 0;
  } catch (const specgp::MissingDatasetError& e) {
    std::cerr << "error: missing dataset: " << e.what() << '\n';
    return 4;
  } catch (const specgp::NumericalError& e) {
    std::cerr << "error: numerical failure: " << e.what() << '\n';
    return 3;
  } catch (const specgp::NotPositiveDefiniteError& e) {
    std::cerr << "error: numerical failure: " << e.what() << '\n';
    return 3;
  } catch (const specgp::ParseError& e) {
    std::cerr << "error: kernel expression: " << e.what() << '\n';
    return 2;
  } catch (const specgp::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gaussian-process regression experiments"};
  app.require_subcommand(1);
  std::string data_dir;
  app.add_option("--data-dir", data_dir, "dataset directory (default: $SPECGP_DATA)");

  auto* run = app.add_subcommand("run", "fit one model and write predictions, metrics and a manifest");
  std::string run_config;
  Overrides run_o;
  run->add_option("--config", run_config, "config file")->required();
  add_overrides(run, run_o);

  auto* sweep = app.add_subcommand("sweep", "repeat a run over basis sizes, with a full-GP benchmark row");
  std::string sweep_config, sweep_m = "5,15,25,35", sweep_models;
  bool no_full = false;
  Overrides sweep_o;
  sweep->add_option("--config", sweep_config, "config file")->required();
  sweep->add_option("--m-values", sweep_m, "comma-separated m values");
  sweep->add_option("--models", sweep_models, "comma-separated models (default: the config's model)");
  sweep->add_flag("--no-full", no_full, "skip the full-GP benchmark row");
  add_overrides(sweep, sweep_o);

  auto* cmp = app.add_subcommand("compare", "run several configs on the same split and tabulate");
  std::vector<std::string> cmp_configs;
  std::string cmp_out = "out/compare";
  cmp->add_option("--config", cmp_configs, "config files (two or more)")->required()->take_all();
  cmp->add_option("--out", cmp_out, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  const auto dir = specgp::data_directory(data_dir, SPECGP_DEFAULT_DATA_DIR);

  if (*run) {
    return guarded([&] {
      const auto cfg = specgp::resolve(load_with_overrides(run_config, run_o));
      const auto r = specgp::execute(cfg, dir);
      specgp::write_outputs(r, cfg.out);
      std::cout << specgp::metrics_json(r).dump() << '\n';
    });
  }
  if (*sweep) {
    return guarded([&] {
      const auto cfg = specgp::resolve(load_with_overrides(sweep_config, sweep_o));
      std::vector<specgp::ModelKind> models;
      if (sweep_models.empty())
        models.push_back(cfg.model);
      else
        for (auto f : specgp::detail::split_fields(sweep_models, ','))
          models.push_back(specgp::parse_model_kind(std::string(specgp::detail::trim(f))));
      const auto rows = specgp::sweep(cfg, parse_ints(sweep_m), models, dir, !no_full);
      std::filesystem::create_directories(cfg.out);
      const std::string table = specgp::sweep_csv(rows);
      specgp::detail::write_text(cfg.out / "sweep.csv", table);
      std::cout << table;
      for (const auto& r : rows)
        if (r.status != "ok") std::cerr << "warning: " << r.model << " m=" << r.m << " failed: " << r.status << '\n';
    });
  }
  return guarded([&] {
    std::vector<specgp::ExperimentConfig> cfgs;
    for (const auto& p : cmp_configs) cfgs.push_back(specgp::resolve(specgp::Config::load(p)));
    const auto rows = specgp::compare(cfgs, dir, cmp_out);
    const std::string table = specgp::compare_csv(rows);
    specgp::detail::write_text(std::filesystem::path(cmp_out) / "compare.csv", table);
    std::cout << table;
  });
}
