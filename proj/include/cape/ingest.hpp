#pragma once

// Real-data pipeline: a daily closing-price panel becomes lag-1 log-return
// regression data, fitted with cross-validated constraint levels and step
// sizes, and the estimated precision matrix is exported grouped by sector.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "cape/experiments.hpp"
#include "cape/matrix.hpp"
#include "cape/model.hpp"

namespace cape {

struct PricePanel {
  std::vector<std::string> tickers;
  std::vector<std::string> dates;  // ascending
  DenseMatrix prices;              // dates x tickers, strictly positive
};

/// CSV with a header `date,<ticker>,...` and one row per date. Dates are
/// sorted as strings, so ISO-8601 dates come out chronological. A column
/// with an empty, non-numeric or non-positive cell is dropped when
/// `drop_incomplete`, otherwise it is an error naming the cell.
PricePanel read_prices(std::istream& in, const std::optional<std::vector<std::string>>& ticker_filter,
                       bool drop_incomplete, const std::string& source = "prices");
PricePanel load_prices(const std::string& path,
                       const std::optional<std::vector<std::string>>& ticker_filter = std::nullopt,
                       bool drop_incomplete = false);
void write_prices(std::ostream& out, const PricePanel& panel);

/// r(t, i) = log(p(t+1, i) / p(t, i)).
DenseMatrix log_returns(const PricePanel& panel);
/// X = returns rows 0..T-3, Y = rows 1..T-2 (a one-day lag).
ProblemData lag_design(const DenseMatrix& returns);

struct CvGridPoint {
  ConstraintSpec gamma;
  ConstraintSpec omega;
  double eta_gamma = 0.0;
  double eta_omega = 0.0;
};

struct CvSpec {
  std::size_t folds = 5;
  std::vector<CvGridPoint> grid;
  std::size_t iters = 100;
  std::size_t init_iters = kDefaultInitIters;
  double ridge = 0.0;
  double clip_floor = 0.0;
  std::size_t threads = 1;
};

struct CvScore {
  std::size_t point = 0;
  std::size_t fold = 0;
  /// Held-out sample loss; NaN when the fit failed.
  double score = 0.0;
  std::string failure;
};

struct CvResult {
  std::size_t best = 0;
  CvGridPoint best_point;
  std::vector<double> mean_scores;  // NaN for points with a failed fold
  std::vector<CvScore> scores;      // grid x folds, point-major
};

/// [begin, end) of each contiguous fold; sizes differ by at most one.
std::vector<std::pair<std::size_t, std::size_t>> contiguous_folds(std::size_t n, std::size_t folds);

/// Fits on all folds but one and scores the held-out fold by sample loss.
/// The lowest mean wins; ties go to the smaller constraint level (Γ first,
/// then Ω) and then the smaller step sizes. Throws NumericError listing the
/// failures when no grid point completes.
CvResult cross_validate(const ProblemData& data, const CvSpec& cv, Method method);

/// One fit with a grid point, initialised as the sweeps do.
SolverResult fit_point(const ProblemData& data, const CvGridPoint& point, Method method, std::size_t iters,
                       std::size_t init_iters, double ridge, double clip_floor);

/// Data-scaled default grid: steps from eigenvalue bounds of XᵀX/n and of a
/// pilot precision estimate, crossed with three constraint levels per block.
std::vector<CvGridPoint> default_cv_grid(const ProblemData& data, Method method, double ridge = 0.0);
nlohmann::json cv_grid_to_json(const std::vector<CvGridPoint>& grid);
std::vector<CvGridPoint> cv_grid_from_json(const nlohmann::json& j);

using SectorMap = std::vector<std::pair<std::string, std::string>>;  // ticker, sector

/// CSV with header `ticker,sector`.
SectorMap load_sector_map(const std::string& path);
SectorMap read_sector_map(std::istream& in, const std::string& source = "sectors");

struct SectorBlock {
  std::string sector;
  std::size_t begin = 0;
  std::size_t end = 0;
};

struct PatternExport {
  std::vector<std::size_t> order;    // original index at each position
  std::vector<std::string> tickers;  // reordered
  DenseMatrix magnitude;             // |Ω̂| permuted
  std::vector<SectorBlock> blocks;
  std::vector<std::string> warnings;

  /// Block starts after the first block.
  std::vector<std::size_t> boundaries() const;
  nlohmann::json index_json() const;
};

/// Groups tickers by sector in the order sectors first appear in the map,
/// keeping the original order inside a sector. Tickers missing from the map
/// go last under "unknown" with a warning each. Without a map the order is
/// the identity.
PatternExport export_pattern(const DenseMatrix& omega_hat, const std::vector<std::string>& tickers,
                             const std::optional<SectorMap>& sectors = std::nullopt);
void save_pattern(const PatternExport& pattern, const std::string& csv_path, const std::string& json_path);

struct SectorContrast {
  double within = 0.0;  // mean off-diagonal |Ω̂| inside a sector
  double cross = 0.0;   // mean |Ω̂| across sectors
};
SectorContrast sector_contrast(const PatternExport& pattern);

struct SimulatedPanel {
  PricePanel panel;
  SectorMap sectors;
  GroundTruth truth;
};

/// Prices from a lag-1 log-return model: r(t+1) = Γᵀ r(t) + e(t), with
/// block-diagonal noise precision by sector and returns at daily scale.
SimulatedPanel simulate_panel(std::size_t tickers, std::size_t days, std::size_t sectors, std::uint64_t seed);

}  // namespace cape
