#include "cape/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "cape/csv.hpp"
#include "cape/errors.hpp"
#include "cape/parallel.hpp"
#include "cape/rng.hpp"
#include "cape/synth.hpp"
#include "cape/trace_io.hpp"

namespace cape {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double level(const ConstraintSpec& spec) {
  if (const auto* s = std::get_if<SparsityCount>(&spec.kind)) return static_cast<double>(s->s);
  if (const auto* l = std::get_if<L1Ball>(&spec.kind)) return l->radius;
  return std::numeric_limits<double>::infinity();
}

// True when a should win a tie against b.
bool prefer(const CvGridPoint& a, const CvGridPoint& b) {
  const auto key = [](const CvGridPoint& p) {
    return std::make_tuple(level(p.gamma), level(p.omega), p.eta_gamma, p.eta_omega);
  };
  return key(a) < key(b);
}

ProblemData concat_rows(const ProblemData& data, std::size_t skip_begin, std::size_t skip_end) {
  const std::size_t n = data.n() - (skip_end - skip_begin);
  DenseMatrix x(n, data.d());
  DenseMatrix y(n, data.m());
  std::size_t r = 0;
  for (std::size_t i = 0; i < data.n(); ++i) {
    if (i >= skip_begin && i < skip_end) continue;
    std::copy(data.x.row(i).begin(), data.x.row(i).end(), x.values().begin() + static_cast<std::ptrdiff_t>(r * data.d()));
    std::copy(data.y.row(i).begin(), data.y.row(i).end(), y.values().begin() + static_cast<std::ptrdiff_t>(r * data.m()));
    ++r;
  }
  return {std::move(x), std::move(y)};
}

// Days since 1970-01-01 to a proleptic Gregorian y-m-d.
std::string iso_date(long days) {
  days += 719468;
  const long era = (days >= 0 ? days : days - 146096) / 146097;
  const long doe = days - era * 146097;
  const long yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const long doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const long mp = (5 * doy + 2) / 153;
  const long d = doy - (153 * mp + 2) / 5 + 1;
  const long m = mp < 10 ? mp + 3 : mp - 9;
  const long y = yoe + era * 400 + (m <= 2 ? 1 : 0);
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%04ld-%02ld-%02ld", y, m, d);
  return buf;
}

}  // namespace

PricePanel read_prices(std::istream& in, const std::optional<std::vector<std::string>>& ticker_filter,
                       bool drop_incomplete, const std::string& source) {
  std::string line;
  if (!std::getline(in, line)) throw IoError(source + ": empty price file");
  const auto header = csv::split_line(line);
  if (header.size() < 2) throw IoError(source + ": header needs a date column and at least one ticker");

  std::vector<std::size_t> columns;
  for (std::size_t c = 1; c < header.size(); ++c) {
    if (header[c].empty()) throw IoError(source + ": empty ticker name in column " + std::to_string(c + 1));
    if (!ticker_filter || std::find(ticker_filter->begin(), ticker_filter->end(), header[c]) != ticker_filter->end()) {
      columns.push_back(c);
    }
  }

  std::vector<std::pair<std::string, std::vector<std::string>>> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    auto fields = csv::split_line(line);
    if (fields.size() != header.size()) {
      throw IoError(source + " line " + std::to_string(lineno) + ": expected " + std::to_string(header.size()) +
                    " fields, got " + std::to_string(fields.size()));
    }
    if (fields[0].empty()) throw IoError(source + " line " + std::to_string(lineno) + ": missing date");
    std::string date = fields[0];
    rows.emplace_back(std::move(date), std::move(fields));
  }
  std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].first == rows[i - 1].first) throw IoError(source + ": duplicate date " + rows[i].first);
  }

  std::vector<std::size_t> kept;
  for (std::size_t c : columns) {
    bool ok = true;
    for (const auto& [date, fields] : rows) {
      const auto v = csv::parse_double(fields[c]);
      if (!v || !std::isfinite(*v) || *v <= 0.0) {
        if (!drop_incomplete) {
          throw IoError(source + ": missing or non-positive price for " + header[c] + " on " + date + " ('" +
                        fields[c] + "')");
        }
        ok = false;
        break;
      }
    }
    if (ok) kept.push_back(c);
  }
  if (kept.empty()) throw IoError(source + ": no complete ticker columns remain");
  if (rows.size() < 3) throw IoError(source + ": need at least 3 dates, got " + std::to_string(rows.size()));

  PricePanel panel;
  for (std::size_t c : kept) panel.tickers.push_back(header[c]);
  panel.prices = DenseMatrix(rows.size(), kept.size());
  for (std::size_t t = 0; t < rows.size(); ++t) {
    panel.dates.push_back(rows[t].first);
    for (std::size_t k = 0; k < kept.size(); ++k) panel.prices(t, k) = *csv::parse_double(rows[t].second[kept[k]]);
  }
  return panel;
}

PricePanel load_prices(const std::string& path, const std::optional<std::vector<std::string>>& ticker_filter,
                       bool drop_incomplete) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  return read_prices(in, ticker_filter, drop_incomplete, path);
}

void write_prices(std::ostream& out, const PricePanel& panel) {
  out << "date";
  for (const auto& t : panel.tickers) out << ',' << t;
  out << '\n';
  for (std::size_t t = 0; t < panel.dates.size(); ++t) {
    out << panel.dates[t];
    for (std::size_t k = 0; k < panel.tickers.size(); ++k) out << ',' << csv::format_double(panel.prices(t, k));
    out << '\n';
  }
}

DenseMatrix log_returns(const PricePanel& panel) {
  const DenseMatrix& p = panel.prices;
  if (p.rows() < 2) throw InvalidArgument("log_returns needs at least two dates");
  DenseMatrix r(p.rows() - 1, p.cols());
  for (std::size_t t = 0; t + 1 < p.rows(); ++t) {
    for (std::size_t i = 0; i < p.cols(); ++i) {
      if (!(p(t, i) > 0.0) || !(p(t + 1, i) > 0.0)) {
        throw InvalidArgument("log_returns: non-positive price at row " + std::to_string(t) + ", column " +
                              std::to_string(i));
      }
      r(t, i) = std::log(p(t + 1, i) / p(t, i));
    }
  }
  return r;
}

ProblemData lag_design(const DenseMatrix& returns) {
  if (returns.rows() < 2) throw InvalidArgument("lag_design needs at least two return rows");
  const std::size_t n = returns.rows() - 1;
  return {returns.row_block(0, n), returns.row_block(1, n)};
}

std::vector<std::pair<std::size_t, std::size_t>> contiguous_folds(std::size_t n, std::size_t folds) {
  if (folds < 2) throw InvalidArgument("cross-validation needs at least 2 folds");
  if (n < folds) {
    throw InvalidArgument("cross-validation needs n >= folds, got n = " + std::to_string(n) + ", folds = " +
                          std::to_string(folds));
  }
  std::vector<std::pair<std::size_t, std::size_t>> out;
  std::size_t begin = 0;
  for (std::size_t k = 0; k < folds; ++k) {
    const std::size_t size = n / folds + (k < n % folds ? 1 : 0);
    out.emplace_back(begin, begin + size);
    begin += size;
  }
  return out;
}

SolverResult fit_point(const ProblemData& data, const CvGridPoint& point, Method method, std::size_t iters,
                       std::size_t init_iters, double ridge, double clip_floor) {
  const GramStats stats(data);
  SolverConfig cfg;
  cfg.max_iters = iters;
  cfg.eta_gamma = point.eta_gamma;
  cfg.eta_omega = point.eta_omega;
  cfg.gamma_constraint = point.gamma;
  cfg.omega_constraint = point.omega;
  cfg.omega_constraint.symmetric = true;
  if (clip_floor > 0.0) cfg.pd_fallback = ClipEigen{clip_floor};
  if (method == Method::AltIHT) {
    const auto* sg = std::get_if<SparsityCount>(&point.gamma.kind);
    const auto* so = std::get_if<SparsityCount>(&point.omega.kind);
    if (sg == nullptr || so == nullptr) throw ConfigError("altiht grid points need sparsity constraints");
    return alt_iht(stats, init_iht(stats, sg->s, so->s, init_iters, ridge), cfg);
  }
  if (method == Method::AltPgdL1) {
    return alt_pgd(stats, init_pgd(stats, point.gamma, point.omega, init_iters, ridge), cfg);
  }
  throw ConfigError("cross-validation supports altiht and altpgd-l1");
}

CvResult cross_validate(const ProblemData& data, const CvSpec& cv, Method method) {
  data.validate();
  if (cv.grid.empty()) throw ConfigError("cross-validation grid is empty");
  const auto folds = contiguous_folds(data.n(), cv.folds);

  CvResult result;
  result.scores.resize(cv.grid.size() * cv.folds);
  parallel_for(result.scores.size(), cv.threads, [&](std::size_t k) {
    CvScore& sc = result.scores[k];
    sc.point = k / cv.folds;
    sc.fold = k % cv.folds;
    const auto [begin, end] = folds[sc.fold];
    try {
      const ProblemData train = concat_rows(data, begin, end);
      const ProblemData test = data.rows(begin, end - begin);
      const SolverResult fit =
          fit_point(train, cv.grid[sc.point], method, cv.iters, cv.init_iters, cv.ridge, cv.clip_floor);
      sc.score = sample_loss(test, fit.model);
    } catch (const NumericError& e) {
      sc.score = kNaN;
      sc.failure = e.what();
    }
  });

  result.mean_scores.assign(cv.grid.size(), 0.0);
  for (const auto& sc : result.scores) result.mean_scores[sc.point] += sc.score / static_cast<double>(cv.folds);

  std::optional<std::size_t> best;
  for (std::size_t p = 0; p < cv.grid.size(); ++p) {
    const double s = result.mean_scores[p];
    if (std::isnan(s)) continue;
    if (!best || s < result.mean_scores[*best] ||
        (s == result.mean_scores[*best] && prefer(cv.grid[p], cv.grid[*best]))) {
      best = p;
    }
  }
  if (!best) {
    std::ostringstream msg;
    msg << "cross-validation: every grid point failed;";
    for (std::size_t p = 0; p < cv.grid.size(); ++p) {
      for (const auto& sc : result.scores) {
        if (sc.point == p && !sc.failure.empty()) {
          msg << " [point " << p << " fold " << sc.fold << ": " << sc.failure << "]";
          break;
        }
      }
    }
    throw NumericError(msg.str());
  }
  result.best = *best;
  result.best_point = cv.grid[*best];
  return result;
}

std::vector<CvGridPoint> default_cv_grid(const ProblemData& data, Method method, double ridge) {
  const GramStats stats(data);
  const std::size_t d = data.d();
  const std::size_t m = data.m();
  const JointModel pilot = init_pgd(stats, ConstraintSpec::none(), ConstraintSpec::none(), kDefaultInitIters, ridge);
  const EigenRange tau = extreme_eigs_sym(stats.xtx());
  const EigenRange nu = extreme_eigs_sym(pilot.omega);
  TheoryBounds bounds{nu.min, nu.max, std::max(tau.min, 1e-12 * tau.max), tau.max};
  const StepSizes steps = theory_step_sizes(bounds);

  std::vector<ConstraintSpec> gammas;
  std::vector<ConstraintSpec> omegas;
  if (method == Method::AltIHT) {
    std::set<std::size_t> sg;
    for (std::size_t div : {20, 10, 5}) sg.insert(std::max<std::size_t>(1, d * m / div));
    std::set<std::size_t> so;
    for (std::size_t mult : {1, 2, 4}) so.insert(std::min(m * m, mult * m));
    for (auto s : sg) gammas.push_back(ConstraintSpec::sparsity(s));
    for (auto s : so) omegas.push_back(ConstraintSpec::sparsity(s, true));
  } else {
    const double rg = std::max(l1_norm(pilot.gamma), 1e-12);
    const double ro = l1_norm(pilot.omega);
    for (double f : {0.25, 0.5, 1.0}) gammas.push_back(ConstraintSpec::l1(f * rg));
    for (double f : {0.25, 0.5, 1.0}) omegas.push_back(ConstraintSpec::l1(f * ro, true));
  }
  std::vector<CvGridPoint> grid;
  for (const auto& g : gammas)
    for (const auto& o : omegas)
      for (double f : {0.5, 1.0}) grid.push_back({g, o, f * steps.eta_gamma, f * steps.eta_omega});
  return grid;
}

nlohmann::json cv_grid_to_json(const std::vector<CvGridPoint>& grid) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& p : grid) {
    out.push_back({{"gamma", constraint_to_json(p.gamma)},
                   {"omega", constraint_to_json(p.omega)},
                   {"eta_gamma", p.eta_gamma},
                   {"eta_omega", p.eta_omega}});
  }
  return out;
}

std::vector<CvGridPoint> cv_grid_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.empty()) throw ConfigError("cv grid must be a non-empty JSON array");
  std::vector<CvGridPoint> grid;
  for (const auto& e : j) {
    if (!e.is_object()) throw ConfigError("cv grid entries must be objects");
    for (const auto& [key, value] : e.items()) {
      if (key != "gamma" && key != "omega" && key != "eta_gamma" && key != "eta_omega") {
        throw ConfigError("unknown cv grid key '" + key + "'");
      }
    }
    try {
      CvGridPoint p{constraint_from_json(e.at("gamma")), constraint_from_json(e.at("omega")),
                    e.at("eta_gamma").get<double>(), e.at("eta_omega").get<double>()};
      if (!(p.eta_gamma > 0.0) || !(p.eta_omega > 0.0)) throw ConfigError("cv grid step sizes must be positive");
      grid.push_back(p);
    } catch (const nlohmann::json::exception& ex) {
      throw ConfigError(std::string("cv grid: ") + ex.what());
    }
  }
  return grid;
}

SectorMap read_sector_map(std::istream& in, const std::string& source) {
  std::string line;
  if (!std::getline(in, line) || csv::split_line(line) != std::vector<std::string>{"ticker", "sector"}) {
    throw IoError(source + ": expected header 'ticker,sector'");
  }
  SectorMap map;
  std::set<std::string> seen;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto f = csv::split_line(line);
    if (f.size() != 2 || f[0].empty() || f[1].empty()) {
      throw IoError(source + " line " + std::to_string(lineno) + ": expected 'ticker,sector'");
    }
    if (!seen.insert(f[0]).second) throw IoError(source + ": ticker " + f[0] + " listed twice");
    map.emplace_back(f[0], f[1]);
  }
  return map;
}

SectorMap load_sector_map(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  return read_sector_map(in, path);
}

std::vector<std::size_t> PatternExport::boundaries() const {
  std::vector<std::size_t> out;
  for (std::size_t b = 1; b < blocks.size(); ++b) out.push_back(blocks[b].begin);
  return out;
}

nlohmann::json PatternExport::index_json() const {
  nlohmann::json sectors = nlohmann::json::array();
  for (const auto& b : blocks) sectors.push_back({{"sector", b.sector}, {"begin", b.begin}, {"end", b.end}});
  return {{"tickers", tickers}, {"order", order}, {"sectors", sectors}, {"boundaries", boundaries()},
          {"warnings", warnings}};
}

PatternExport export_pattern(const DenseMatrix& omega_hat, const std::vector<std::string>& tickers,
                             const std::optional<SectorMap>& sectors) {
  if (!omega_hat.is_square()) throw ShapeError("export_pattern: matrix is " + shape_string(omega_hat));
  if (tickers.size() != omega_hat.rows()) {
    throw ShapeError("export_pattern: " + std::to_string(tickers.size()) + " tickers for a " +
                     shape_string(omega_hat) + " matrix");
  }
  PatternExport out;
  const std::size_t p = tickers.size();
  if (!sectors) {
    out.order.resize(p);
    std::iota(out.order.begin(), out.order.end(), std::size_t{0});
  } else {
    std::map<std::string, std::string> lookup(sectors->begin(), sectors->end());
    std::vector<std::string> sector_order;
    for (const auto& [t, s] : *sectors)
      if (std::find(sector_order.begin(), sector_order.end(), s) == sector_order.end()) sector_order.push_back(s);
    for (const auto& s : sector_order) {
      const std::size_t begin = out.order.size();
      for (std::size_t i = 0; i < p; ++i) {
        auto it = lookup.find(tickers[i]);
        if (it != lookup.end() && it->second == s) out.order.push_back(i);
      }
      if (out.order.size() > begin) out.blocks.push_back({s, begin, out.order.size()});
    }
    const std::size_t begin = out.order.size();
    for (std::size_t i = 0; i < p; ++i) {
      if (!lookup.count(tickers[i])) {
        out.order.push_back(i);
        out.warnings.push_back("ticker " + tickers[i] + " has no sector; placed last");
      }
    }
    if (out.order.size() > begin) out.blocks.push_back({"unknown", begin, out.order.size()});
  }
  for (std::size_t i : out.order) out.tickers.push_back(tickers[i]);
  out.magnitude = DenseMatrix(p, p);
  for (std::size_t a = 0; a < p; ++a)
    for (std::size_t b = 0; b < p; ++b) out.magnitude(a, b) = std::abs(omega_hat(out.order[a], out.order[b]));
  return out;
}

void save_pattern(const PatternExport& pattern, const std::string& csv_path, const std::string& json_path) {
  save_matrix_csv(csv_path, pattern.magnitude);
  csv::write_text_file(json_path, pattern.index_json().dump(2) + "\n");
}

SectorContrast sector_contrast(const PatternExport& pattern) {
  const std::size_t p = pattern.magnitude.rows();
  std::vector<std::size_t> block_of(p, 0);
  for (std::size_t b = 0; b < pattern.blocks.size(); ++b)
    for (std::size_t i = pattern.blocks[b].begin; i < pattern.blocks[b].end; ++i) block_of[i] = b;
  double within = 0.0, cross = 0.0;
  std::size_t nw = 0, nc = 0;
  for (std::size_t i = 0; i < p; ++i) {
    for (std::size_t j = 0; j < p; ++j) {
      if (i == j) continue;
      if (block_of[i] == block_of[j]) {
        within += pattern.magnitude(i, j);
        ++nw;
      } else {
        cross += pattern.magnitude(i, j);
        ++nc;
      }
    }
  }
  return {nw ? within / static_cast<double>(nw) : kNaN, nc ? cross / static_cast<double>(nc) : kNaN};
}

SimulatedPanel simulate_panel(std::size_t tickers, std::size_t days, std::size_t sectors, std::uint64_t seed) {
  if (tickers < 2 || days < 4 || sectors < 1 || sectors > tickers) {
    throw InvalidArgument("simulate_panel: need tickers >= 2, days >= 4 and 1 <= sectors <= tickers");
  }
  static const char* kSectorNames[] = {"Energy", "Information Technology", "Financials", "Health Care",
                                       "Industrials", "Utilities", "Materials", "Consumer Staples"};
  SimulatedPanel sim;
  std::vector<std::size_t> sector_of(tickers);
  for (std::size_t i = 0; i < tickers; ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "T%02zu", i);
    sim.panel.tickers.emplace_back(name);
    sector_of[i] = i % sectors;
    const std::string sector = sectors <= 8 ? kSectorNames[sector_of[i]] : "Sector" + std::to_string(sector_of[i]);
    sim.sectors.emplace_back(name, sector);
  }

  // Noise covariance: daily scale 0.01, correlation 0.5 inside a sector.
  const double vol = 0.01;
  DenseMatrix cov(tickers, tickers);
  for (std::size_t i = 0; i < tickers; ++i)
    for (std::size_t j = 0; j < tickers; ++j)
      cov(i, j) = vol * vol * (i == j ? 1.0 : (sector_of[i] == sector_of[j] ? 0.5 : 0.0));
  DenseMatrix gamma = make_sparse_gamma(tickers, tickers, tickers, rng::derive_seed(seed, {1}));
  gamma *= 0.15;
  const double norm = spectral_norm_est(gamma);
  if (norm > 0.5) gamma *= 0.5 / norm;

  sim.truth.gamma_star = gamma;
  sim.truth.omega_star = inverse_pd(cov);
  sim.truth.sigma_x = cov;

  const DenseMatrix factor = cholesky(cov).transpose();
  rng::Stream stream(rng::derive_seed(seed, {2}));
  DenseMatrix z(days - 1, tickers);
  for (double& v : z.values()) v = stream.normal();
  const DenseMatrix noise = matmul(z, factor);

  DenseMatrix returns(days - 1, tickers);
  for (std::size_t t = 0; t + 1 < days; ++t) {
    for (std::size_t j = 0; j < tickers; ++j) {
      double v = noise(t, j);
      if (t > 0)
        for (std::size_t i = 0; i < tickers; ++i) v += returns(t - 1, i) * gamma(i, j);
      returns(t, j) = v;
    }
  }
  sim.panel.prices = DenseMatrix(days, tickers);
  for (std::size_t j = 0; j < tickers; ++j) {
    double price = 100.0;
    sim.panel.prices(0, j) = price;
    for (std::size_t t = 0; t + 1 < days; ++t) {
      price *= std::exp(returns(t, j));
      sim.panel.prices(t + 1, j) = price;
    }
  }
  const long start = 18262;  // 2020-01-01
  for (std::size_t t = 0; t < days; ++t) sim.panel.dates.push_back(iso_date(start + static_cast<long>(t)));
  return sim;
}

}  // namespace cape
