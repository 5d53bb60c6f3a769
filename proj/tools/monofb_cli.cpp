// monofb: command-line front end.
//
//   monofb validate MODEL
//   monofb simulate MODEL [--u LIST | --closed] [--x0 LIST] [--horizon T]
//   monofb characteristic MODEL [--u-seeds LIST] [--grid LIST]
//   monofb smallgain MODEL [--u-seeds LIST] [--trials N] [--horizon T]
//   monofb linear MODEL
//   monofb dde MODEL [--r LIST] [--u-seeds LIST]
//
// Common flags: --out DIR, --seed N, --tol X. Exit codes: 0 success, 2 parse
// error, 3 validation error, 4 numerical failure.

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "monofb/monofb.hpp"

namespace fs = std::filesystem;
using namespace monofb;

namespace {

constexpr int kExitParse = 2;
constexpr int kExitValidation = 3;
constexpr int kExitNumerical = 4;

int exit_code(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::Parse: return kExitParse;
    case ErrorCategory::Validation: return kExitValidation;
    case ErrorCategory::Numerical: return kExitNumerical;
  }
  return 1;
}

struct Config {
  std::string command;
  std::string model_path;
  std::string out_dir = "out";
  std::uint64_t seed = 1;
  double tol = 1e-9;
  std::size_t trials = 50;
  double horizon = 50.0;
  std::string r_list;
  std::string u_seeds;
  std::string u_list;
  std::string x0_list;
  std::string grid;
  bool closed = false;

  Json to_json() const {
    return {{"command", command}, {"model", model_path}, {"out", out_dir},     {"seed", seed},
            {"tol", tol},         {"trials", trials},    {"horizon", horizon}, {"r", r_list},
            {"u_seeds", u_seeds}, {"u", u_list},         {"x0", x0_list},      {"grid", grid},
            {"closed", closed}};
  }
};

double parse_number(const std::string& s) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size()) throw Error(ErrorCode::Validation, "not a number: '" + s + "'");
  return v;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream is(s);
  while (std::getline(is, item, sep)) {
    item.erase(std::remove_if(item.begin(), item.end(), [](unsigned char c) { return std::isspace(c); }), item.end());
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

Vec parse_vec(const std::string& s) {
  Vec v;
  for (const auto& t : split(s, ',')) v.push_back(parse_number(t));
  return v;
}

// Vectors separated by ';', components by ','. A scalar list "0,1,5" is read
// as three one-dimensional points when the expected dimension is 1.
std::vector<Vec> parse_points(const std::string& s, std::size_t dim) {
  std::vector<Vec> pts;
  if (s.find(';') == std::string::npos && dim == 1) {
    for (double v : parse_vec(s)) pts.push_back({v});
    return pts;
  }
  for (const auto& part : split(s, ';')) pts.push_back(parse_vec(part));
  for (const Vec& p : pts)
    if (p.size() != dim)
      throw Error(ErrorCode::DimensionMismatch, "point has " + std::to_string(p.size()) + " components, expected " +
                                                    std::to_string(dim));
  return pts;
}

std::vector<Vec> default_u_seeds(std::size_t m) { return {Vec(m, 0.0), Vec(m, 1.0), Vec(m, 5.0)}; }

ModelDef read_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Validation, "cannot read model file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return load_model(ss.str());
}

fs::path out_path(const Config& cfg, const std::string& file) {
  fs::create_directories(cfg.out_dir);
  return fs::path(cfg.out_dir) / file;
}

void write_json(const Config& cfg, const std::string& file, Json doc) {
  doc["config"] = cfg.to_json();
  doc["seed"] = cfg.seed;
  std::ofstream(out_path(cfg, file)) << doc.dump(2) << '\n';
}

/// Runs `body`, which fills `doc`. A numerical failure still writes the
/// partial document, flagged.
template <class Body>
int guarded(const Config& cfg, const std::string& file, Body body) {
  Json doc = Json::object();
  try {
    body(doc);
    doc["partial"] = false;
    write_json(cfg, file, doc);
    return 0;
  } catch (const Error& e) {
    if (e.category() != ErrorCategory::Numerical) throw;
    doc["partial"] = true;
    doc["error"] = {{"code", to_string(e.code())}, {"message", e.what()}};
    write_json(cfg, file, doc);
    std::cerr << "error: " << e.what() << '\n';
    return kExitNumerical;
  }
}

int cmd_validate(const Config& cfg) {
  const ModelDef model = read_model(cfg.model_path);
  std::cout << "n=" << model.n() << " m=" << model.m() << ' ';
  MonotonicityOptions mo;
  mo.trials = std::min<std::size_t>(cfg.trials, 20);
  mo.seed = cfg.seed;
  try {
    const MonotonicityVerdict v = check_monotone(model, mo);
    if (v.system_monotone && v.output_class == OutputClass::AntiMonotone)
      std::cout << "monotone-candidate\n";
    else
      std::cout << "not-monotone-candidate (system " << (v.system_monotone ? "monotone" : "not monotone")
                << ", output " << to_string(v.output_class) << ")\n";
  } catch (const Error& e) {
    if (e.category() != ErrorCategory::Numerical) throw;
    std::cout << "monotonicity-unchecked (" << e.what() << ")\n";
  }
  std::cout << "order_states " << model.order_states().to_string() << '\n';
  std::cout << "order_inputs " << model.order_inputs().to_string() << '\n';
  return 0;
}

int cmd_simulate(const Config& cfg) {
  const ModelDef model = read_model(cfg.model_path);
  const Vec x0 = cfg.x0_list.empty() ? Vec(model.n(), 0.0) : parse_vec(cfg.x0_list);
  if (x0.size() != model.n()) throw Error(ErrorCode::DimensionMismatch, "--x0 needs " + std::to_string(model.n()) + " values");
  InputSignal input = InputSignal::closed_loop();
  if (!cfg.closed) {
    const Vec u = cfg.u_list.empty() ? Vec(model.m(), 0.0) : parse_vec(cfg.u_list);
    if (u.size() != model.m()) throw Error(ErrorCode::DimensionMismatch, "--u needs " + std::to_string(model.m()) + " values");
    input = InputSignal::constant(u);
  }
  IntegratorOpts io;
  return guarded(cfg, "simulate.json", [&](Json& doc) {
    const Trajectory tr = integrate(model, x0, input, 0.0, cfg.horizon, io);
    std::ofstream csv(out_path(cfg, "trajectory.csv"));
    write_trajectory_csv(csv, tr, model.states());
    doc["trajectory"] = to_json(tr);
    doc["integrator"] = to_json(io);
    std::cout << "status " << to_string(tr.status) << " t=" << format_number(tr.final_time()) << '\n';
  });
}

int cmd_characteristic(const Config& cfg) {
  const ModelDef model = read_model(cfg.model_path);
  const auto seeds = cfg.u_seeds.empty() ? default_u_seeds(model.m()) : parse_points(cfg.u_seeds, model.m());
  std::vector<Vec> grid;
  if (cfg.grid.empty()) {
    for (int i = 0; i <= 20; ++i) grid.push_back(Vec(model.m(), 0.25 * i));
  } else {
    grid = parse_points(cfg.grid, model.m());
  }
  const Characteristic ch(model);
  return guarded(cfg, "characteristic.json", [&](Json& doc) {
    std::ofstream csv(out_path(cfg, "k_grid.csv"));
    csv << "point";
    for (const auto& nm : model.inputs()) csv << ',' << nm;
    for (const auto& nm : model.inputs()) csv << ",k_" << nm;
    csv << '\n';
    const AntiMonotoneVerdict am = check_antimonotone_char(ch, grid);
    for (std::size_t i = 0; i < grid.size(); ++i) {
      csv << i;
      for (double v : grid[i]) csv << ',' << format_number(v);
      for (double v : am.values[i]) csv << ',' << format_number(v);
      csv << '\n';
    }
    doc["anti_monotone"] = {{"pass", am.pass}, {"violations", am.violations}};
    IterationOptions io;
    io.tol = cfg.tol;
    Json its = Json::array();
    for (std::size_t s = 0; s < seeds.size(); ++s) {
      const IterationResult r = iterate_char(ch, seeds[s], io);
      its.push_back(to_json(r));
      std::ofstream orbit(out_path(cfg, "orbit_" + std::to_string(s) + ".csv"));
      write_orbit_csv(orbit, r.orbit, model.inputs());
      std::cout << "seed " << s << ": " << to_string(r.classification) << " after " << r.iterations << " steps\n";
    }
    doc["iterations"] = its;
  });
}

int cmd_smallgain(const Config& cfg) {
  const ModelDef model = read_model(cfg.model_path);
  SmallGainOptions so;
  so.u_seeds = cfg.u_seeds.empty() ? default_u_seeds(model.m()) : parse_points(cfg.u_seeds, model.m());
  so.tol = cfg.tol;
  so.seed = cfg.seed;
  so.equilibria.tol = cfg.tol;
  so.equilibria.boundedness.trials = cfg.trials;
  so.equilibria.boundedness.horizon = cfg.horizon;
  return guarded(cfg, "smallgain.json", [&](Json& doc) {
    const SmallGainAnalysis a = analyze_small_gain(model, so);
    Json its = Json::array();
    for (std::size_t i = 0; i < a.iterations.size(); ++i) {
      Json j = to_json(a.iterations[i]);
      j["error"] = a.iteration_errors[i].empty() ? Json(nullptr) : Json(a.iteration_errors[i]);
      its.push_back(std::move(j));
    }
    doc["iterations"] = its;
    doc["iteration_converges"] = a.iteration_converges;
    doc["k2_solutions"] = to_json(a.k2);
    doc["equilibria"] = to_json(a.equilibria);
    doc["verdict"] = a.equilibria.verdict;
    doc["seed_coverage"] = so.u_seeds.size();
    std::cout << "k2 solutions: " << a.k2.solutions.size() << (a.k2.unique ? " (unique)" : "") << '\n';
    std::cout << "extended equilibria: " << a.equilibria.equilibria.size() << '\n';
    std::cout << "verdict: " << a.equilibria.verdict << '\n';
  });
}

int cmd_linear(const Config& cfg) {
  const ModelDef model = read_model(cfg.model_path);
  if (!model.is_linear()) throw Error(ErrorCode::Validation, "linear: model has no linear A/B/C block");
  const LinearTriple& t = model.linear_triple();
  return guarded(cfg, "linear.json", [&](Json& doc) {
    const SmallGainReport rep = small_gain_report(t.A, t.B, t.C, model.order_states(), model.order_inputs());
    doc["report"] = to_json(rep);
    doc["verdict"] = rep.verdict;
    std::cout << "rho(K) = " << format_number(rep.rho_K) << '\n';
    std::cout << "verdict: " << rep.verdict << '\n';
  });
}

int cmd_dde(const Config& cfg) {
  const ModelDef model = read_model(cfg.model_path);
  const auto seeds = cfg.u_seeds.empty() ? default_u_seeds(model.m()) : parse_points(cfg.u_seeds, model.m());
  std::vector<double> r_grid;
  if (!cfg.r_list.empty())
    for (const auto& s : split(cfg.r_list, ',')) r_grid.push_back(parse_number(s));
  return guarded(cfg, "dde.json", [&](Json& doc) {
    const Characteristic ch(model);
    IterationOptions io;
    io.tol = cfg.tol;
    std::optional<std::pair<Vec, Vec>> pair;
    for (const Vec& s : seeds) {
      const IterationResult r = iterate_char(ch, s, io);
      if (r.period_two) {
        pair = r.period_two;
        break;
      }
    }
    if (!pair) throw Error(ErrorCode::PairNotPeriodTwo, "no period-two orbit of k reached from the u-seeds");
    const double settle = pair_settling_time(model, pair->first, pair->second);
    if (r_grid.empty()) r_grid.push_back(std::max(20.0, 10.0 * settle));
    doc["pair"] = {pair->first, pair->second};
    doc["settling_time"] = settle;
    OscillationOptions oo;
    oo.keep_trajectory = true;
    const auto reports = pseudo_oscillation_sweep(model, pair->first, pair->second, r_grid, oo);
    Json reps = Json::array();
    for (std::size_t i = 0; i < reports.size(); ++i) {
      Json j = to_json(reports[i]);
      const std::string csv_name = "dde_r" + std::to_string(i) + ".csv";
      std::ofstream csv(out_path(cfg, csv_name));
      write_trajectory_csv(csv, reports[i].trajectory, model.states());
      j["trajectory_csv"] = csv_name;
      reps.push_back(std::move(j));
      std::cout << "r=" << format_number(reports[i].r) << ": visits " << reports[i].visits_x0 << '/'
                << reports[i].visits_x1 << ", pseudo-oscillation "
                << (reports[i].detected ? "detected" : "not detected") << '\n';
    }
    doc["reports"] = reps;
  });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Small-gain analysis of monotone systems under negative feedback", "monofb"};
  app.require_subcommand(1);
  Config cfg;

  const auto add_common = [&](CLI::App* sub) {
    sub->add_option("model", cfg.model_path, "model file")->required();
    sub->add_option("--out", cfg.out_dir, "output directory");
    sub->add_option("--seed,--seeds", cfg.seed, "random seed");
    sub->add_option("--tol", cfg.tol, "tolerance");
  };
  auto* validate = app.add_subcommand("validate", "load a model and print a summary");
  add_common(validate);
  validate->add_option("--trials", cfg.trials, "monotonicity trials (at most 20)");
  auto* simulate = app.add_subcommand("simulate", "integrate the open or closed loop");
  add_common(simulate);
  simulate->add_option("--u", cfg.u_list, "constant input, comma separated");
  simulate->add_flag("--closed", cfg.closed, "close the loop u = h(x)");
  simulate->add_option("--x0", cfg.x0_list, "initial state, comma separated");
  simulate->add_option("--horizon", cfg.horizon, "final time");
  auto* characteristic = app.add_subcommand("characteristic", "tabulate k and iterate u+ = k(u)");
  add_common(characteristic);
  characteristic->add_option("--u-seeds", cfg.u_seeds, "iteration seeds, ';' between points");
  characteristic->add_option("--grid", cfg.grid, "grid for the k table, ';' between points");
  auto* smallgain = app.add_subcommand("smallgain", "k o k solutions, extended equilibria, verdict");
  add_common(smallgain);
  smallgain->add_option("--u-seeds", cfg.u_seeds, "seeds, ';' between points");
  smallgain->add_option("--trials", cfg.trials, "boundedness trials");
  smallgain->add_option("--horizon", cfg.horizon, "boundedness horizon");
  auto* linear = app.add_subcommand("linear", "spectral radius and Hurwitz equivalences");
  add_common(linear);
  auto* dde = app.add_subcommand("dde", "pseudo-oscillation experiment under delayed feedback");
  add_common(dde);
  dde->add_option("--r", cfg.r_list, "delays, comma separated");
  dde->add_option("--u-seeds", cfg.u_seeds, "seeds used to find a period-two pair");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitParse;
  }

  try {
    cfg.command = app.get_subcommands().front()->get_name();
    if (validate->parsed()) return cmd_validate(cfg);
    if (simulate->parsed()) return cmd_simulate(cfg);
    if (characteristic->parsed()) return cmd_characteristic(cfg);
    if (smallgain->parsed()) return cmd_smallgain(cfg);
    if (linear->parsed()) return cmd_linear(cfg);
    if (dde->parsed()) return cmd_dde(cfg);
  } catch (const Error& e) {
    std::cerr << "error";
    if (e.line()) std::cerr << " (line " << *e.line() << ")";
    std::cerr << ": " << e.what() << '\n';
    return exit_code(e.category());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitNumerical;
  }
  return 0;
}
