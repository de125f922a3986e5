#include <cstdlib>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "json.hpp"

#include "cape/csv.hpp"
#include "cape/experiments.hpp"
#include "cape/ingest.hpp"
#include "cape/matrix.hpp"
#include "cape/trace_io.hpp"
#include "commands.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Outcome {
  int code = 0;
  std::string out;
  std::string err;
};

Outcome cli(std::vector<std::string> args) {
  args.insert(args.begin(), "cape");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cape::cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("cape-cli-test-" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) { return cape::csv::read_text_file(p.string()); }

std::string first_line(const fs::path& p) {
  const std::string text = slurp(p);
  return text.substr(0, text.find('\n'));
}

// A small synthetic instance shared by several cases.
fs::path small_data(const std::string& name) {
  const fs::path dir = scratch(name);
  const auto r = cli({"synth", "--out", dir.string(), "--n", "300", "--d", "6", "--m", "5", "--s-gamma", "8",
                      "--seed", "4"});
  REQUIRE(r.code == 0);
  return dir;
}

}  // namespace

TEST_CASE("cli theory prints the closed-form values") {
  const auto r = cli({"theory"});
  CHECK(r.code == 0);
  CHECK(r.out.find("eta_gamma=0.5\n") != std::string::npos);
  CHECK(r.out.find("R=0.125\n") != std::string::npos);
  CHECK(r.out.find("pgd_eta=1\n") != std::string::npos);
  CHECK(r.out.find("sparsity_inflation=1.015625\n") != std::string::npos);

  const auto b = cli({"theory", "--nu-min", "0.5", "--nu-max", "2", "--tau-min", "1", "--tau-max", "4"});
  CHECK(b.code == 0);
  CHECK(b.out.find("pgd_eta=0.23529411764705882\n") != std::string::npos);  // 2 / (8 + 0.5)
  CHECK(cli({"theory", "--nu-min", "3", "--nu-max", "2"}).code == 2);
}

TEST_CASE("cli help and version") {
  const auto h = cli({"fit", "--help"});
  CHECK(h.code == 0);
  CHECK(h.out.find("[source:") != std::string::npos);
  CHECK(h.out.find("--eta-gamma") != std::string::npos);
  CHECK(cli({"--version"}).code == 0);
  const auto none = cli({});
  CHECK(none.code == 2);
  CHECK(none.err.rfind("error[config]:", 0) == 0);
}

TEST_CASE("cli synth -> init -> fit") {
  const fs::path data = small_data("fit-data");
  for (const char* f : {"x.csv", "y.csv", "gamma_star.csv", "omega_star.csv", "sigma_x.csv", "manifest.json"})
    CHECK(fs::exists(data / f));
  const json manifest = json::parse(slurp(data / "manifest.json"));
  CHECK(manifest.at("n") == 300);
  CHECK(manifest.at("seed") == 4);
  CHECK(manifest.at("command").get<std::string>().find("synth") != std::string::npos);
  CHECK(cape::load_matrix_csv((data / "x.csv").string()).rows() == 300);

  const fs::path init = scratch("init-out");
  CHECK(cli({"init", "--data", data.string(), "--out", init.string()}).code == 0);
  CHECK(fs::exists(init / "gamma_init.csv"));
  CHECK(fs::exists(init / "omega_init.csv"));

  const fs::path out = scratch("fit-out");
  const auto r = cli({"fit", "--data", data.string(), "--out", out.string(), "--iters", "40"});
  REQUIRE(r.code == 0);
  std::istringstream trace_in(slurp(out / "trace.csv"));
  const auto trace = cape::read_trace_csv(trace_in);
  CHECK(trace.records.size() == 41);
  CHECK(trace.records.back().err_gamma.has_value());
  CHECK(*trace.records.back().err_gamma < *trace.records.front().err_gamma);
  CHECK(first_line(out / "trace.csv") == "iter,objective,err_gamma,err_omega,delta,seconds");
  const json tj = json::parse(slurp(out / "trace.json"));
  CHECK(tj.contains("config"));
  CHECK(tj.at("records").size() == 41);

  // Starting from the written initialiser gives the same fit.
  const fs::path again = scratch("fit-again");
  CHECK(cli({"fit", "--data", data.string(), "--out", again.string(), "--iters", "40", "--init-gamma",
             (init / "gamma_init.csv").string(), "--init-omega", (init / "omega_init.csv").string()})
            .code == 0);
  CHECK(slurp(again / "gamma_hat.csv") == slurp(out / "gamma_hat.csv"));
}

TEST_CASE("cli exit codes") {
  const fs::path data = small_data("codes-data");
  const fs::path out = scratch("codes-out");

  // Indefinite starting precision: numeric failure naming the iteration.
  cape::DenseMatrix bad(5, 5);
  for (std::size_t i = 0; i < 5; ++i) bad(i, i) = i == 2 ? -1.0 : 1.0;
  cape::save_matrix_csv((out / "bad_omega.csv").string(), bad);
  const auto npd = cli({"fit", "--data", data.string(), "--out", out.string(), "--init-omega",
                        (out / "bad_omega.csv").string(), "--iters", "5"});
  CHECK(npd.code == 3);
  CHECK(npd.err.rfind("error[numeric]:", 0) == 0);

  const auto missing = cli({"fit", "--data", (out / "nowhere").string(), "--out", out.string()});
  CHECK(missing.code == 4);
  CHECK(missing.err.rfind("error[io]:", 0) == 0);

  CHECK(cli({"fit", "--data", data.string(), "--out", out.string(), "--pd-fallback", "maybe"}).code == 2);
  CHECK(cli({"fit", "--data", data.string(), "--out", out.string(), "--iters", "-3"}).code == 2);
  CHECK(cli({"fit", "--data", data.string(), "--out", out.string(), "--no-such-flag", "1"}).code == 2);
  CHECK(cli({"exp", "nonsense"}).code == 2);
  CHECK(cli({"synth", "--out", out.string(), "--d", "3", "--m", "3", "--s-gamma", "20"}).code == 2);

  // Clip fallback turns a failing run into a completed one.
  const auto clip = cli({"fit", "--data", data.string(), "--out", out.string(), "--eta-omega", "50", "--iters", "5",
                         "--pd-fallback", "clip"});
  CHECK(clip.code == 0);
  CHECK(cli({"fit", "--data", data.string(), "--out", out.string(), "--eta-omega", "50", "--iters", "5"}).code == 3);
}

TEST_CASE("cli config files") {
  const fs::path dir = scratch("config");
  const fs::path cfg = dir / "synth.json";
  cape::csv::write_text_file(cfg.string(), R"({"n": 200, "d": 4, "m": 3, "s_gamma": 5, "seed": 9})");
  CHECK(cli({"synth", "--config", cfg.string(), "--out", (dir / "a").string()}).code == 0);
  CHECK(cape::load_matrix_csv((dir / "a" / "x.csv").string()).rows() == 200);

  // Command-line flags override the file.
  CHECK(cli({"synth", "--config", cfg.string(), "--n", "150", "--out", (dir / "b").string()}).code == 0);
  CHECK(cape::load_matrix_csv((dir / "b" / "x.csv").string()).rows() == 150);
  CHECK(slurp(dir / "a" / "gamma_star.csv") == slurp(dir / "b" / "gamma_star.csv"));

  cape::csv::write_text_file((dir / "bad.json").string(), R"({"n": 200, "colour": "red"})");
  const auto unknown = cli({"synth", "--config", (dir / "bad.json").string(), "--out", (dir / "c").string()});
  CHECK(unknown.code == 2);
  CHECK(unknown.err.find("colour") != std::string::npos);

  cape::csv::write_text_file((dir / "broken.json").string(), "{not json");
  CHECK(cli({"synth", "--config", (dir / "broken.json").string()}).code == 2);

  // The manifest written by synth is itself a valid config.
  CHECK(cli({"synth", "--config", (dir / "a" / "manifest.json").string(), "--out", (dir / "d").string()}).code == 0);
  CHECK(slurp(dir / "a" / "y.csv") == slurp(dir / "d" / "y.csv"));
}

TEST_CASE("cli output directory from the environment") {
  const fs::path dir = scratch("env");
  ::setenv("CAPE_OUT_DIR", dir.string().c_str(), 1);
  const auto r = cli({"synth", "--n", "50", "--d", "3", "--m", "3", "--s-gamma", "2"});
  ::unsetenv("CAPE_OUT_DIR");
  CHECK(r.code == 0);
  CHECK(fs::exists(dir / "x.csv"));
}

TEST_CASE("cli runs are byte-identical when repeated") {
  const fs::path data = small_data("repeat-data");
  const fs::path d2 = scratch("repeat-data2");
  CHECK(cli({"synth", "--out", d2.string(), "--n", "300", "--d", "6", "--m", "5", "--s-gamma", "8", "--seed", "4"})
            .code == 0);
  for (const char* f : {"x.csv", "y.csv", "gamma_star.csv", "omega_star.csv"}) CHECK(slurp(data / f) == slurp(d2 / f));
  // The manifests differ only in the echoed command (the output path).
  auto ma = json::parse(slurp(data / "manifest.json")), mb = json::parse(slurp(d2 / "manifest.json"));
  ma.erase("command");
  mb.erase("command");
  CHECK(ma == mb);

  const fs::path a = scratch("repeat-a"), b = scratch("repeat-b");
  for (const auto& out : {a, b}) {
    REQUIRE(cli({"fit", "--data", data.string(), "--out", (out / "fit").string(), "--iters", "20"}).code == 0);
    REQUIRE(cli({"pgd", "--data", data.string(), "--out", (out / "pgd").string(), "--iters", "20"}).code == 0);
    REQUIRE(cli({"exp", "table1", "--out", (out / "exp").string(), "--trials", "2", "--iters", "20", "--n-grid",
                 "300", "--threads", "2"})
                .code == 0);
    REQUIRE(cli({"ingest", "--simulate", "--sim-tickers", "6", "--sim-days", "80", "--sim-sectors", "2", "--out",
                 (out / "sim").string()})
                .code == 0);
    REQUIRE(cli({"ingest", "--prices", (out / "sim" / "prices.csv").string(), "--sectors",
                 (out / "sim" / "sectors.csv").string(), "--folds", "3", "--iters", "20", "--out",
                 (out / "ing").string()})
                .code == 0);
  }
  for (const char* f : {"fit/gamma_hat.csv", "fit/omega_hat.csv", "fit/trace.csv", "fit/trace.json",
                        "pgd/gamma_hat.csv", "pgd/trace.csv", "exp/table1.csv",
                        "sim/prices.csv", "ing/cv_scores.csv", "ing/omega_hat.csv", "ing/pattern.csv",
                        "ing/pattern.json"}) {
    CAPTURE(f);
    CHECK(slurp(a / f) == slurp(b / f));
  }
  auto ea = json::parse(slurp(a / "exp/table1.meta.json")), eb = json::parse(slurp(b / "exp/table1.meta.json"));
  ea.erase("command");
  eb.erase("command");
  CHECK(ea == eb);
}

TEST_CASE("cli experiment outputs") {
  const fs::path dir = scratch("exp");
  const auto r = cli({"exp", "table1", "--out", dir.string(), "--trials", "2", "--iters", "20", "--n-grid", "300",
                      "--name", "t1", "--timing"});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("altiht") != std::string::npos);
  CHECK(first_line(dir / "t1.csv") == cape::kRecordsHeader);
  std::istringstream in(slurp(dir / "t1.csv"));
  const auto recs = cape::read_records_csv(in);
  CHECK(recs.size() == 2 * 2);  // methods x trials
  for (const auto& rec : recs) CHECK(rec.seconds.has_value());

  // The meta file reproduces the run.
  const fs::path again = scratch("exp-again");
  const auto rr = cli({"exp", "table1", "--config", (dir / "t1.meta.json").string(), "--out", again.string()});
  REQUIRE(rr.code == 0);
  std::istringstream in2(slurp(again / "t1.csv"));
  const auto recs2 = cape::read_records_csv(in2);
  REQUIRE(recs2.size() == recs.size());
  for (std::size_t i = 0; i < recs.size(); ++i) CHECK(recs2[i].rel_err_gamma == recs[i].rel_err_gamma);
  CHECK(cli({"exp", "phase", "--config", (dir / "t1.meta.json").string(), "--out", again.string()}).code == 2);
}

TEST_CASE("plot-facing files keep their columns") {
  const fs::path dir = scratch("schemas");
  REQUIRE(cli({"exp", "tradeoff", "--out", dir.string(), "--trials", "2", "--iters", "15", "--n-grid", "300,600"})
              .code == 0);
  CHECK(first_line(dir / "tradeoff.csv") == "method,n,d,m,s,trial,rel_err_gamma,rel_err_omega,success,rate,seconds");
  CHECK(first_line(dir / "tradeoff.traces.csv") ==
        "method,n,iter,mean_delta,mean_rel_err_gamma,mean_rel_err_omega");
  const json meta = json::parse(slurp(dir / "tradeoff.meta.json"));
  for (const char* k : {"kind", "seed", "trials", "n_grid", "command", "code_version", "results"})
    CHECK(meta.contains(k));

  REQUIRE(cli({"exp", "scaling", "--out", dir.string(), "--trials", "2", "--iters", "10", "--width-draws", "50",
               "--n-grid", "400"})
              .code == 0);
  CHECK(first_line(dir / "scaling.scaling.csv") == "scenario,focus,d,m,s,n,width,x,mean_abs_err,trials_used");

  REQUIRE(cli({"exp", "probe", "--out", dir.string(), "--trials", "20", "--n-grid", "100,400", "--probe-dim", "3"})
              .code == 0);
  CHECK(first_line(dir / "probe.probe.csv") == "probe,n,trials,p95,normalized,mc_mean,std_error,exact_mean");

  REQUIRE(cli({"ingest", "--simulate", "--sim-tickers", "6", "--sim-days", "80", "--sim-sectors", "2", "--out",
               (dir / "sim").string()})
              .code == 0);
  CHECK(first_line(dir / "sim" / "sectors.csv") == "ticker,sector");
  CHECK(first_line(dir / "sim" / "prices.csv").rfind("date,", 0) == 0);
  REQUIRE(cli({"ingest", "--prices", (dir / "sim" / "prices.csv").string(), "--sectors",
               (dir / "sim" / "sectors.csv").string(), "--folds", "3", "--iters", "20", "--out",
               (dir / "ing").string()})
              .code == 0);
  CHECK(first_line(dir / "ing" / "cv_scores.csv") == "point,fold,score");
  const auto pattern = cape::load_matrix_csv((dir / "ing" / "pattern.csv").string());
  CHECK(pattern.rows() == 6);
  CHECK(cape::is_symmetric(pattern, 0.0));
  const json idx = json::parse(slurp(dir / "ing" / "pattern.json"));
  for (const char* k : {"tickers", "order", "sectors", "boundaries", "warnings"}) CHECK(idx.contains(k));
  CHECK(idx.at("boundaries") == json::array({3}));
}
