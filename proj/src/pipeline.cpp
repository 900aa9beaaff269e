#include "lobtail/pipeline.hpp"

#include "lobtail/csv.hpp"
#include "lobtail/dynamics.hpp"
#include "lobtail/errors.hpp"
#include "lobtail/lob_ingest.hpp"
#include "lobtail/option_pricing.hpp"
#include "lobtail/risk_metrics.hpp"
#include "lobtail/stats.hpp"
#include "lobtail/tail_static.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <set>
#include <sstream>

namespace lobtail::pipeline {

using nlohmann::json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string slurp(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void spit(const fs::path& path, const std::string& text)
{
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out << text;
    if (!out) throw DataError("write failed: " + path.string());
}

std::string hex(std::uint64_t h)
{
    static constexpr char digits[] = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i, h >>= 4) s[static_cast<std::size_t>(i)] = digits[h & 0xf];
    return s;
}

std::string kind_name(IndexKind k) { return std::string(to_string(k)); }

// File layout under the output directory.
struct Layout {
    fs::path root;

    fs::path ticker_dir(const std::string& t) const { return root / t; }
    fs::path book(const std::string& t) const { return root / t / "book_clean.csv"; }
    fs::path ingest_summary(const std::string& t) const { return root / t / "ingest.json"; }
    fs::path index_csv(const std::string& t, IndexKind k, int d) const
    {
        return root / t / (t + "_" + kind_name(k) + "_d" + std::to_string(d) + ".csv");
    }
    fs::path ewp_csv(const std::string& t, IndexKind k) const { return root / t / (t + "_" + kind_name(k) + "_ewp.csv"); }
    fs::path kind_dir(const std::string& t, IndexKind k) const { return root / t / kind_name(k); }
    fs::path per_depth(const std::string& t, IndexKind k, const std::string& stem, int d, const char* ext) const
    {
        return kind_dir(t, k) / (stem + "_d" + std::to_string(d) + ext);
    }
    fs::path file(const std::string& t, IndexKind k, const char* name) const { return kind_dir(t, k) / name; }
    fs::path rachev() const { return root / "rachev.csv"; }
    fs::path systemic(const std::string& t) const { return root / ("systemic_" + t + ".csv"); }
};

const std::vector<std::string> kStaticPerDepth{"hill_curve", "density", "qq", "mean_excess"};

std::vector<int> pricing_depths(const Config& cfg)
{
    return cfg.pricing.depths.empty() ? cfg.depths : cfg.pricing.depths;
}

int max_depth(const Config& cfg) { return *std::max_element(cfg.depths.begin(), cfg.depths.end()); }

// ---------------------------------------------------------------- config json

template <class T>
void take(const json& j, const char* key, T& out)
{
    if (j.contains(key)) out = j.at(key).get<T>();
}

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where)
{
    if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
    for (const auto& [key, value] : j.items())
        if (!allowed.contains(key)) throw ConfigError("unknown config key '" + where + key + "'");
}

std::vector<IndexKind> kinds_from(const json& j)
{
    std::vector<IndexKind> out;
    for (const auto& v : j) out.push_back(parse_index_kind(v.get<std::string>()));
    return out;
}

std::vector<Innovation> families_from(const json& j)
{
    std::vector<Innovation> out;
    for (const auto& v : j) out.push_back(parse_innovation(v.get<std::string>()));
    return out;
}

template <class E>
json names(const std::vector<E>& v)
{
    json a = json::array();
    for (E e : v) a.push_back(std::string(to_string(e)));
    return a;
}

template <class T>
bool has_duplicates(std::vector<T> v)
{
    std::sort(v.begin(), v.end());
    return std::adjacent_find(v.begin(), v.end()) != v.end();
}

bool subset(const std::vector<IndexKind>& a, const std::vector<IndexKind>& b)
{
    return std::all_of(a.begin(), a.end(), [&](IndexKind k) { return std::find(b.begin(), b.end(), k) != b.end(); });
}

// ---------------------------------------------------------------- small writers

std::string fmt(double v) { return csv::format(v); }

json fit_to_json(const ModelFit& f, int depth)
{
    json j;
    j["depth"] = depth;
    j["innovation"] = {{"family", std::string(to_string(f.innovation.family))},
                       {"shape1", f.innovation.shape1},
                       {"shape2", f.innovation.shape2}};
    const auto& p = f.params;
    j["params"] = {{"phi0", p.phi0},     {"phi1", p.phi1},     {"theta1", p.theta1},
                   {"alpha0", p.alpha0}, {"alpha1", p.alpha1}, {"beta1", p.beta1}};
    json se = json::object();
    const auto pn = parameter_names(f.innovation.family);
    for (std::size_t i = 0; i < pn.size() && static_cast<Eigen::Index>(i) < f.std_errors.size(); ++i) {
        const double v = f.std_errors[static_cast<Eigen::Index>(i)];
        se[pn[i]] = std::isfinite(v) ? json(v) : json(nullptr);
    }
    j["std_errors"] = se;
    j["loglik"] = f.loglik;
    j["n_obs"] = f.n_obs;
    j["n_params"] = f.n_params;
    j["aic"] = f.aic;
    j["bic"] = f.bic;
    j["aic_per_obs"] = f.aic_per_obs;
    j["bic_per_obs"] = f.bic_per_obs;
    j["converged"] = f.converged;
    j["boundary"] = f.boundary;
    j["iterations"] = f.iterations;
    j["message"] = f.message;
    j["last_return"] = f.last_return;
    j["last_innovation"] = f.last_innovation;
    j["last_sigma2"] = f.last_sigma2;
    return j;
}

ModelFit fit_from_json(const json& j)
{
    ModelFit f;
    const auto& in = j.at("innovation");
    f.innovation = {parse_innovation(in.at("family").get<std::string>()), in.at("shape1").get<double>(),
                    in.at("shape2").get<double>()};
    const auto& p = j.at("params");
    f.params.phi0 = p.at("phi0").get<double>();
    f.params.phi1 = p.at("phi1").get<double>();
    f.params.theta1 = p.at("theta1").get<double>();
    f.params.alpha0 = p.at("alpha0").get<double>();
    f.params.alpha1 = p.at("alpha1").get<double>();
    f.params.beta1 = p.at("beta1").get<double>();
    f.loglik = j.at("loglik").get<double>();
    f.n_obs = j.at("n_obs").get<int>();
    f.converged = j.at("converged").get<bool>();
    f.boundary = j.at("boundary").get<bool>();
    f.last_return = j.at("last_return").get<double>();
    f.last_innovation = j.at("last_innovation").get<double>();
    f.last_sigma2 = j.at("last_sigma2").get<double>();
    return f;
}

json read_json(const fs::path& path)
{
    try {
        return json::parse(slurp(path));
    } catch (const json::exception& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

Vector read_returns(const fs::path& path)
{
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    return read_index_csv(in).returns;
}

IndexSeries read_series(const fs::path& path)
{
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    return read_index_csv(in);
}

Vector linspace(double a, double b, int n)
{
    return Vector::LinSpaced(n, a, b);
}

// Every `step`-th entry so the file stays plottable.
Vector thin(const Vector& v, Eigen::Index target)
{
    if (v.size() <= target) return v;
    const Eigen::Index step = (v.size() + target - 1) / target;
    Vector out((v.size() + step - 1) / step);
    for (Eigen::Index i = 0; i < out.size(); ++i) out[i] = v[i * step];
    return out;
}

// ---------------------------------------------------------------- stages

void stage_ingest(const Config& cfg, const Layout& L)
{
    for (const auto& in : cfg.inputs) {
        IngestOptions o;
        o.depth = max_depth(cfg);
        o.burn_in_fraction = cfg.burn_in_fraction;
        o.session_start_s = cfg.session_start_s;
        o.session_end_s = cfg.session_end_s;
        o.messages = in.messages;
        const auto series = ingest(in.orderbook, in.ticker, o);
        if (series.size() < 2) throw DataError(in.ticker + ": fewer than 2 snapshots after cleaning");
        std::ostringstream book;
        write_orderbook(series, book);
        spit(L.book(in.ticker), book.str());
        json s;
        s["ticker"] = in.ticker;
        s["depth"] = series.depth;
        s["snapshots"] = series.size();
        s["dropped_burn_in"] = series.dropped_burn_in;
        s["dropped_invalid"] = series.dropped_invalid;
        s["first_time_s"] = series.snapshots.front().time_s;
        s["last_time_s"] = series.snapshots.back().time_s;
        spit(L.ingest_summary(in.ticker), s.dump(2) + "\n");
    }
}

void stage_spreads(const Config& cfg, const Layout& L)
{
    for (const auto& in : cfg.inputs) {
        const auto series = load_orderbook(L.book(in.ticker), max_depth(cfg), in.ticker);
        for (IndexKind k : cfg.kinds) {
            std::vector<Vector> per_depth;
            for (int d : cfg.depths) {
                const auto idx = build_index(series, k, d);
                std::ostringstream out;
                write_index_csv(idx, out);
                spit(L.index_csv(in.ticker, k, d), out.str());
                per_depth.push_back(idx.returns);
            }
            const auto ewp = build_ewp(per_depth, k);
            std::ostringstream out;
            csv::write_columns(out, {"log_return"}, {ewp.returns});
            spit(L.ewp_csv(in.ticker, k), out.str());
        }
    }
}

void stage_static_tails(const Config& cfg, const Layout& L)
{
    for (const auto& in : cfg.inputs)
        for (IndexKind k : cfg.kinds) {
            std::ostringstream gpd, rank, kurt;
            gpd << "depth,xi,ci_lo,ci_hi,sigma,n_exceed,status\n";
            rank << "depth,b,ci_lo,ci_hi,a,se_gi,n_pos,status\n";
            kurt << "depth,excess_kurtosis,robust_excess_kurtosis\n";
            for (int d : cfg.depths) {
                const Vector r = read_returns(L.index_csv(in.ticker, k, d));
                if (r.size() < 2) throw DataError(in.ticker + " depth " + std::to_string(d) + ": too few returns");

                // Estimator failures on degenerate data are recorded, not fatal.
                try {
                    const auto g = gpd_fit(r, cfg.tail_fraction);
                    gpd << d << ',' << fmt(g.xi_hat) << ',' << fmt(g.ci_xi.lower) << ',' << fmt(g.ci_xi.upper) << ','
                        << fmt(g.sigma_hat) << ',' << g.n_exceed << ",ok\n";
                } catch (const NumericalError& e) {
                    gpd << d << ",nan,nan,nan,nan,0," << std::quoted(e.what()) << '\n';
                }
                try {
                    const auto b = rank_half_fit(positive_part(r));
                    rank << d << ',' << fmt(b.b_hat) << ',' << fmt(b.ci.lower) << ',' << fmt(b.ci.upper) << ','
                         << fmt(b.a_hat) << ',' << fmt(b.se_gi) << ',' << b.n_pos << ",ok\n";
                } catch (const NumericalError& e) {
                    rank << d << ",nan,nan,nan,nan,nan,0," << std::quoted(e.what()) << '\n';
                }
                double ek = kNaN, rk = kNaN;
                try {
                    ek = excess_kurtosis(r);
                } catch (const NumericalError&) {
                }
                try {
                    rk = robust_excess_kurtosis(r);
                } catch (const NumericalError&) {
                }
                kurt << d << ',' << fmt(ek) << ',' << fmt(rk) << '\n';

                {
                    std::ostringstream out;
                    out << "k,alpha,lo,hi\n";
                    try {
                        const auto curve = hill_curve(upper_tail(r, cfg.tail_fraction),
                                                      default_hill_range(static_cast<std::size_t>(r.size())));
                        for (std::size_t i = 0; i < curve.ks.size(); ++i) {
                            const auto e = static_cast<Eigen::Index>(i);
                            out << curve.ks[i] << ',' << fmt(curve.alpha_hat[e]) << ',' << fmt(curve.wald_lo[e]) << ','
                                << fmt(curve.wald_hi[e]) << '\n';
                        }
                    } catch (const NumericalError&) {
                    }
                    spit(L.per_depth(in.ticker, k, "hill_curve", d, ".csv"), out.str());
                }
                {
                    std::ostringstream out;
                    const double sd = stats::sample_sd(r);
                    if (sd > 0.0) {
                        const Vector asc = stats::sorted(r);
                        double lo = stats::quantile_sorted(asc, 0.001), hi = stats::quantile_sorted(asc, 0.999);
                        if (!(hi > lo)) {
                            lo = asc[0];
                            hi = asc[asc.size() - 1];
                        }
                        const Vector grid = linspace(lo, hi, 512);
                        double h = 0.0;
                        try {
                            h = silverman_bandwidth(r);
                        } catch (const NumericalError&) {
                            h = 0.9 * sd * std::pow(static_cast<double>(r.size()), -0.2);
                        }
                        csv::write_columns(out, {"x", "density"}, {grid, kernel_density(r, grid, h)});
                    } else {
                        out << "x,density\n";
                    }
                    spit(L.per_depth(in.ticker, k, "density", d, ".csv"), out.str());
                }
                {
                    std::ostringstream out;
                    const auto qq = qq_points(r);
                    csv::write_columns(out, {"theoretical", "empirical"}, {thin(qq.theoretical, 2000), thin(qq.empirical, 2000)});
                    spit(L.per_depth(in.ticker, k, "qq", d, ".csv"), out.str());
                }
                {
                    std::ostringstream out;
                    const Vector asc = stats::sorted(r);
                    Vector th(40);
                    for (int i = 0; i < 40; ++i) th[i] = stats::quantile_sorted(asc, 0.80 + 0.195 * i / 39.0);
                    const auto me = mean_excess(r, th);
                    Vector ne(static_cast<Eigen::Index>(me.n_exceed.size()));
                    for (std::size_t i = 0; i < me.n_exceed.size(); ++i)
                        ne[static_cast<Eigen::Index>(i)] = static_cast<double>(me.n_exceed[i]);
                    csv::write_columns(out, {"threshold", "mean_excess", "n_exceed"}, {me.thresholds, me.mean_excess, ne});
                    spit(L.per_depth(in.ticker, k, "mean_excess", d, ".csv"), out.str());
                }
            }
            spit(L.file(in.ticker, k, "gpd_fits.csv"), gpd.str());
            spit(L.file(in.ticker, k, "rank_fit.csv"), rank.str());
            spit(L.file(in.ticker, k, "kurtosis.csv"), kurt.str());
        }
}

void stage_fit_dynamics(const Config& cfg, const Layout& L)
{
    FitOptions opts;
    opts.require_convergence = false;
    opts.max_iterations = cfg.fit_max_iterations;
    for (const auto& in : cfg.inputs)
        for (IndexKind k : cfg.dynamics_kinds) {
            std::vector<ModelFit> fits;
            std::ostringstream sel;
            sel << "depth,family,loglik,aic,bic,aic_per_obs,bic_per_obs,converged,boundary\n";
            for (int d : cfg.depths) {
                const Vector r = read_returns(L.index_csv(in.ticker, k, d));
                auto fit = fit_arma_garch(r, cfg.innovation, opts);
                spit(L.per_depth(in.ticker, k, "fit", d, ".json"), fit_to_json(fit, d).dump(2) + "\n");
                for (Innovation fam : cfg.selection_families) {
                    const ModelFit alt = fam == cfg.innovation ? fit : fit_arma_garch(r, fam, opts);
                    sel << d << ',' << to_string(fam) << ',' << fmt(alt.loglik) << ',' << fmt(alt.aic) << ','
                        << fmt(alt.bic) << ',' << fmt(alt.aic_per_obs) << ',' << fmt(alt.bic_per_obs) << ','
                        << (alt.converged ? 1 : 0) << ',' << (alt.boundary ? 1 : 0) << '\n';
                }
                fits.push_back(std::move(fit));
            }
            csv::write_matrix_binary(L.file(in.ticker, k, "residuals.bin"), residual_matrix(fits));
            spit(L.file(in.ticker, k, "model_selection.csv"), sel.str());
        }
}

std::vector<ModelFit> load_fits(const Config& cfg, const Layout& L, const std::string& t, IndexKind k)
{
    const Matrix res = csv::read_matrix_binary(L.file(t, k, "residuals.bin"));
    if (res.cols() != static_cast<Eigen::Index>(cfg.depths.size()))
        throw AlignmentError("residual matrix has " + std::to_string(res.cols()) + " columns for " +
                             std::to_string(cfg.depths.size()) + " depths");
    std::vector<ModelFit> fits;
    for (std::size_t i = 0; i < cfg.depths.size(); ++i) {
        auto f = fit_from_json(read_json(L.per_depth(t, k, "fit", cfg.depths[i], ".json")));
        f.residuals = res.col(static_cast<Eigen::Index>(i));
        fits.push_back(std::move(f));
    }
    return fits;
}

void stage_simulate(const Config& cfg, const Layout& L)
{
    for (const auto& in : cfg.inputs)
        for (IndexKind k : cfg.dynamics_kinds) {
            const auto fits = load_fits(cfg, L, in.ticker, k);
            const std::string label = in.ticker + "/" + kind_name(k);
            const Matrix res = residual_matrix(fits);
            const Matrix joint = joint_scenarios(fits, res, cfg.n_scenarios, derive_seed(cfg.seed, label + "/joint"));
            Matrix all(joint.rows(), joint.cols() + 1);
            all.leftCols(joint.cols()) = joint;
            all.col(joint.cols()) = ewp_index(joint);
            csv::write_matrix_binary(L.file(in.ticker, k, "scenarios.bin"), all);

            std::ostringstream sample;
            {
                std::vector<std::string> header;
                for (int d : cfg.depths) header.push_back("d" + std::to_string(d));
                header.push_back("index");
                const Eigen::Index n = std::min<Eigen::Index>(all.rows(), 1000);
                std::vector<Vector> cols;
                for (Eigen::Index c = 0; c < all.cols(); ++c) cols.emplace_back(all.col(c).head(n));
                csv::write_columns(sample, header, cols);
            }
            spit(L.file(in.ticker, k, "scenarios_sample.csv"), sample.str());

            std::ostringstream tails;
            tails << "depth,horizon,xi,ci_lo,ci_hi,sigma,n_exceed,status\n";
            for (std::size_t i = 0; i < fits.size(); ++i) {
                const int d = cfg.depths[i];
                const auto ens = simulate_ensemble(fits[i], cfg.n_scenarios, cfg.horizon,
                                                   derive_seed(cfg.seed, label + "/d" + std::to_string(d)));
                try {
                    const auto rep = dynamic_tail_report(ens, cfg.tail_fraction);
                    tails << d << ',' << cfg.horizon << ',' << fmt(rep.gpd.xi_hat) << ',' << fmt(rep.gpd.ci_xi.lower)
                          << ',' << fmt(rep.gpd.ci_xi.upper) << ',' << fmt(rep.gpd.sigma_hat) << ','
                          << rep.gpd.n_exceed << ",ok\n";
                } catch (const NumericalError& e) {
                    tails << d << ',' << cfg.horizon << ",nan,nan,nan,nan,0," << std::quoted(e.what()) << '\n';
                }
            }
            spit(L.file(in.ticker, k, "dynamic_tails.csv"), tails.str());
        }
}

void stage_price_options(const Config& cfg, const Layout& L)
{
    const auto& pc = cfg.pricing;
    CarrMadanOptions cm;
    cm.damping = pc.damping;
    cm.n = pc.fft_n;
    cm.eta = pc.eta;
    const Vector mats = Eigen::Map<const Vector>(pc.maturities.data(), static_cast<Eigen::Index>(pc.maturities.size()));
    for (const auto& in : cfg.inputs)
        for (IndexKind k : pc.kinds)
            for (int d : pricing_depths(cfg)) {
                const auto s = read_series(L.index_csv(in.ticker, k, d));
                if (s.values.size() < 2) throw DataError(in.ticker + ": empty index series");
                const double epy =
                    pc.events_per_year > 0.0 ? pc.events_per_year : static_cast<double>(s.returns.size()) * 252.0;
                const double dt = 1.0 / epy;
                const auto fit = estimate_ndig(s.returns, dt);
                const double s0 = s.values[s.values.size() - 1];
                Vector strikes(static_cast<Eigen::Index>(pc.moneyness.size()));
                for (std::size_t i = 0; i < pc.moneyness.size(); ++i)
                    strikes[static_cast<Eigen::Index>(i)] = pc.moneyness[i] * s0;

                const auto& p = fit.params;
                json j;
                j["depth"] = d;
                j["s0"] = s0;
                j["dt"] = dt;
                j["events_per_year"] = epy;
                j["params"] = {{"mu3", p.mu3},           {"gamma", p.gamma}, {"rho", p.rho},
                               {"sigma3", p.sigma3},     {"lambda_t", p.lambda_t}, {"mu_t", p.mu_t},
                               {"lambda_u", p.lambda_u}, {"mu_u", p.mu_u}};
                j["objective"] = fit.objective;
                j["moment_residual"] = fit.moment_residual;
                j["cf_residual"] = fit.cf_residual;
                j["converged"] = fit.converged;
                j["evaluations"] = fit.evaluations;
                auto moments = [](const ShapeMoments& m) {
                    return json{{"mean", m.mean},
                                {"variance", m.variance},
                                {"skewness", m.skewness},
                                {"excess_kurtosis", m.excess_kurtosis}};
                };
                j["sample_moments"] = moments(fit.sample);
                j["fitted_moments"] = moments(fit.fitted);
                spit(L.per_depth(in.ticker, k, "ndig", d, ".json"), j.dump(2) + "\n");

                const auto surf = carr_madan_call_surface(p, s0, pc.rate, strikes, mats, cm);
                std::ostringstream out;
                out << "tau,strike,call,put,damping\n";
                for (Eigen::Index m = 0; m < mats.size(); ++m)
                    for (Eigen::Index i = 0; i < strikes.size(); ++i)
                        out << fmt(mats[m]) << ',' << fmt(strikes[i]) << ',' << fmt(surf.calls(m, i)) << ','
                            << fmt(surf.puts(m, i)) << ',' << fmt(surf.damping[m]) << '\n';
                spit(L.per_depth(in.ticker, k, "prices", d, ".csv"), out.str());
            }
}

void stage_implied_vol(const Config& cfg, const Layout& L)
{
    const auto& pc = cfg.pricing;
    for (const auto& in : cfg.inputs)
        for (IndexKind k : pc.kinds)
            for (int d : pricing_depths(cfg)) {
                const double s0 = read_json(L.per_depth(in.ticker, k, "ndig", d, ".json")).at("s0").get<double>();
                const auto t = csv::read_file(L.per_depth(in.ticker, k, "prices", d, ".csv"));
                const Vector tau = t.column_vector("tau"), strike = t.column_vector("strike"),
                             call = t.column_vector("call"), put = t.column_vector("put");
                std::ostringstream out;
                out << "tau,strike,call,put,iv,missing_reason\n";
                for (Eigen::Index i = 0; i < tau.size(); ++i) {
                    const auto iv = implied_vol(call[i], s0, strike[i], pc.rate, tau[i]);
                    out << fmt(tau[i]) << ',' << fmt(strike[i]) << ',' << fmt(call[i]) << ',' << fmt(put[i]) << ','
                        << fmt(iv.sigma) << ',' << to_string(iv.status) << '\n';
                }
                spit(L.per_depth(in.ticker, k, "surface", d, ".csv"), out.str());
            }
}

void stage_rachev(const Config& cfg, const Layout& L)
{
    std::ostringstream out;
    out << "ticker,kind,depth,ratio,avar_gain,avar_loss\n";
    for (const auto& in : cfg.inputs)
        for (IndexKind k : cfg.kinds)
            for (int d : cfg.depths) {
                const Vector r = read_returns(L.index_csv(in.ticker, k, d));
                RachevReport rep;
                try {
                    rep = rachev_ratio(r, cfg.rachev_beta, cfg.rachev_gamma);
                } catch (const DegenerateError&) {
                    rep.ratio = rep.avar_gain = rep.avar_loss = kNaN;
                }
                out << in.ticker << ',' << kind_name(k) << ',' << d << ',' << fmt(rep.ratio) << ','
                    << fmt(rep.avar_gain) << ',' << fmt(rep.avar_loss) << '\n';
            }
    spit(L.rachev(), out.str());
}

std::string level_label(double c) { return std::to_string(static_cast<int>(std::lround(c * 100.0))); }

void stage_systemic(const Config& cfg, const Layout& L)
{
    if (cfg.dynamics_kinds.empty()) return;
    const IndexKind k = cfg.dynamics_kinds.front();
    for (const auto& in : cfg.inputs) {
        const Matrix sc = csv::read_matrix_binary(L.file(in.ticker, k, "scenarios.bin"));
        const auto table = systemic_report(sc, cfg.depths, cfg.systemic_levels);
        std::ostringstream out;
        out << "depth";
        for (double c : table.levels) out << ",coes_" << level_label(c) << ",coetl_" << level_label(c);
        for (double c : table.levels) out << ",covar_" << level_label(c);
        out << '\n';
        for (const auto& row : table.rows) {
            out << row.depth;
            for (const auto& cell : row.cells) out << ',' << fmt(cell.coes) << ',' << fmt(cell.coetl);
            for (const auto& cell : row.cells) out << ',' << fmt(cell.covar);
            out << '\n';
        }
        spit(L.systemic(in.ticker), out.str());
    }
}

void run_stage(const Config& cfg, Stage s)
{
    const Layout L{cfg.output_dir};
    switch (s) {
    case Stage::Ingest: return stage_ingest(cfg, L);
    case Stage::Spreads: return stage_spreads(cfg, L);
    case Stage::StaticTails: return stage_static_tails(cfg, L);
    case Stage::FitDynamics: return stage_fit_dynamics(cfg, L);
    case Stage::Simulate: return stage_simulate(cfg, L);
    case Stage::PriceOptions: return stage_price_options(cfg, L);
    case Stage::ImpliedVol: return stage_implied_vol(cfg, L);
    case Stage::Rachev: return stage_rachev(cfg, L);
    case Stage::Systemic: return stage_systemic(cfg, L);
    }
}

[[noreturn]] void rethrow_prefixed(std::string_view stage, const std::exception& e)
{
    const std::string msg = std::string(stage) + ": " + e.what();
    if (dynamic_cast<const ConfigError*>(&e)) throw ConfigError(msg);
    if (dynamic_cast<const DataError*>(&e)) throw DataError(msg);
    if (dynamic_cast<const NumericalError*>(&e)) throw NumericalError(msg);
    if (dynamic_cast<const fs::filesystem_error*>(&e)) throw DataError(msg);
    throw Error(msg);
}

// Paths in the manifest are relative to the output directory when inside it.
std::string manifest_key(const fs::path& p, const fs::path& root)
{
    const auto rel = p.lexically_relative(root);
    if (!rel.empty() && *rel.begin() != "..") return rel.generic_string();
    return p.generic_string();
}

}  // namespace

// ---------------------------------------------------------------- public

Config default_config()
{
    Config c;
    for (int i = 0; i < 21; ++i) c.pricing.moneyness.push_back(std::exp(-0.2 + 0.02 * i));
    for (double minutes : {1.0, 5.0, 15.0, 30.0, 60.0}) c.pricing.maturities.push_back(minutes / (252.0 * 390.0));
    return c;
}

Config parse_config(std::string_view json_text)
{
    Config c = default_config();
    try {
        const json j = json::parse(json_text);
        check_keys(j,
                   {"inputs", "depths", "kinds", "burn_in_fraction", "session", "tail_fraction", "innovation",
                    "selection_families", "dynamics_kinds", "fit_max_iterations", "n_scenarios", "horizon", "seed",
                    "pricing", "rachev", "systemic_levels", "output_dir"},
                   "");
        if (j.contains("inputs")) {
            c.inputs.clear();
            for (const auto& e : j.at("inputs")) {
                check_keys(e, {"ticker", "orderbook", "messages"}, "inputs.");
                TickerInput t;
                t.ticker = e.at("ticker").get<std::string>();
                t.orderbook = e.at("orderbook").get<std::string>();
                if (e.contains("messages")) t.messages = e.at("messages").get<std::string>();
                c.inputs.push_back(std::move(t));
            }
        }
        take(j, "depths", c.depths);
        if (j.contains("kinds")) c.kinds = kinds_from(j.at("kinds"));
        take(j, "burn_in_fraction", c.burn_in_fraction);
        if (j.contains("session")) {
            const auto& s = j.at("session");
            check_keys(s, {"start_s", "end_s"}, "session.");
            take(s, "start_s", c.session_start_s);
            take(s, "end_s", c.session_end_s);
        }
        take(j, "tail_fraction", c.tail_fraction);
        if (j.contains("innovation")) c.innovation = parse_innovation(j.at("innovation").get<std::string>());
        if (j.contains("selection_families")) c.selection_families = families_from(j.at("selection_families"));
        if (j.contains("dynamics_kinds")) c.dynamics_kinds = kinds_from(j.at("dynamics_kinds"));
        take(j, "fit_max_iterations", c.fit_max_iterations);
        take(j, "n_scenarios", c.n_scenarios);
        take(j, "horizon", c.horizon);
        take(j, "seed", c.seed);
        if (j.contains("pricing")) {
            const auto& p = j.at("pricing");
            check_keys(p,
                       {"damping", "fft_n", "eta", "rate", "events_per_year", "moneyness", "maturities", "kinds",
                        "depths"},
                       "pricing.");
            take(p, "damping", c.pricing.damping);
            take(p, "fft_n", c.pricing.fft_n);
            take(p, "eta", c.pricing.eta);
            take(p, "rate", c.pricing.rate);
            take(p, "events_per_year", c.pricing.events_per_year);
            take(p, "moneyness", c.pricing.moneyness);
            take(p, "maturities", c.pricing.maturities);
            if (p.contains("kinds")) c.pricing.kinds = kinds_from(p.at("kinds"));
            take(p, "depths", c.pricing.depths);
        }
        if (j.contains("rachev")) {
            const auto& r = j.at("rachev");
            check_keys(r, {"beta", "gamma"}, "rachev.");
            take(r, "beta", c.rachev_beta);
            take(r, "gamma", c.rachev_gamma);
        }
        take(j, "systemic_levels", c.systemic_levels);
        if (j.contains("output_dir")) c.output_dir = j.at("output_dir").get<std::string>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    return c;
}

Config load_config(const fs::path& path)
{
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

std::string to_json(const Config& c)
{
    json j;
    json inputs = json::array();
    for (const auto& t : c.inputs)
        inputs.push_back({{"ticker", t.ticker}, {"orderbook", t.orderbook.string()}, {"messages", t.messages.string()}});
    j["inputs"] = inputs;
    j["depths"] = c.depths;
    j["kinds"] = names(c.kinds);
    j["burn_in_fraction"] = c.burn_in_fraction;
    j["session"] = {{"start_s", c.session_start_s}, {"end_s", c.session_end_s}};
    j["tail_fraction"] = c.tail_fraction;
    j["innovation"] = std::string(to_string(c.innovation));
    j["selection_families"] = names(c.selection_families);
    j["dynamics_kinds"] = names(c.dynamics_kinds);
    j["fit_max_iterations"] = c.fit_max_iterations;
    j["n_scenarios"] = c.n_scenarios;
    j["horizon"] = c.horizon;
    j["seed"] = c.seed;
    j["pricing"] = {{"damping", c.pricing.damping},
                    {"fft_n", c.pricing.fft_n},
                    {"eta", c.pricing.eta},
                    {"rate", c.pricing.rate},
                    {"events_per_year", c.pricing.events_per_year},
                    {"moneyness", c.pricing.moneyness},
                    {"maturities", c.pricing.maturities},
                    {"kinds", names(c.pricing.kinds)},
                    {"depths", c.pricing.depths}};
    j["rachev"] = {{"beta", c.rachev_beta}, {"gamma", c.rachev_gamma}};
    j["systemic_levels"] = c.systemic_levels;
    j["output_dir"] = c.output_dir.string();
    return j.dump(2);
}

void validate(const Config& c)
{
    auto fail = [](const std::string& m) { throw ConfigError(m); };
    if (c.inputs.empty()) fail("no input order books configured");
    std::vector<std::string> tickers;
    for (const auto& t : c.inputs) {
        if (t.ticker.empty()) fail("input with an empty ticker");
        if (t.ticker.find_first_of("/\\") != std::string::npos) fail("ticker '" + t.ticker + "' contains a path separator");
        if (!fs::is_regular_file(t.orderbook)) fail("order book not found: " + t.orderbook.string());
        if (!t.messages.empty() && !fs::is_regular_file(t.messages))
            fail("message file not found: " + t.messages.string());
        tickers.push_back(t.ticker);
    }
    if (has_duplicates(tickers)) fail("duplicate ticker in inputs");
    if (c.depths.empty()) fail("no depths configured");
    for (int d : c.depths)
        if (d < 1 || d > kMaxDepth) fail("depth " + std::to_string(d) + " outside 1.." + std::to_string(kMaxDepth));
    if (has_duplicates(c.depths)) fail("duplicate depth");
    if (c.kinds.empty()) fail("no index kinds configured");
    if (has_duplicates(c.kinds)) fail("duplicate index kind");
    if (!(c.burn_in_fraction >= 0.0 && c.burn_in_fraction < 1.0)) fail("burn_in_fraction must lie in [0, 1)");
    if (!(c.session_start_s < c.session_end_s)) fail("session start must precede session end");
    if (!(c.tail_fraction > 0.0 && c.tail_fraction < 1.0)) fail("tail_fraction must lie in (0, 1)");
    if (!subset(c.dynamics_kinds, c.kinds)) fail("dynamics_kinds must be a subset of kinds");
    if (has_duplicates(c.dynamics_kinds)) fail("duplicate dynamics kind");
    if (c.fit_max_iterations < 1) fail("fit_max_iterations must be positive");
    if (c.n_scenarios < 100) fail("n_scenarios must be at least 100");
    if (c.horizon < 1) fail("horizon must be at least 1");
    const auto& p = c.pricing;
    if (p.fft_n < 16 || (p.fft_n & (p.fft_n - 1)) != 0) fail("pricing.fft_n must be a power of two >= 16");
    if (!(p.eta > 0.0)) fail("pricing.eta must be positive");
    if (!std::isfinite(p.rate)) fail("pricing.rate must be finite");
    if (!(p.events_per_year >= 0.0)) fail("pricing.events_per_year must be >= 0");
    if (!std::isfinite(p.damping)) fail("pricing.damping must be finite");
    if (p.moneyness.empty() || p.maturities.empty()) fail("pricing needs strikes and maturities");
    for (double m : p.moneyness)
        if (!(m > 0.0)) fail("pricing.moneyness must be positive");
    for (double t : p.maturities)
        if (!(t > 0.0)) fail("pricing.maturities must be positive");
    if (!subset(p.kinds, c.kinds)) fail("pricing.kinds must be a subset of kinds");
    for (int d : p.depths)
        if (std::find(c.depths.begin(), c.depths.end(), d) == c.depths.end())
            fail("pricing depth " + std::to_string(d) + " is not a configured depth");
    if (!(c.rachev_beta > 0.0 && c.rachev_beta <= 1.0 && c.rachev_gamma > 0.0 && c.rachev_gamma <= 1.0))
        fail("rachev levels must lie in (0, 1]");
    for (double l : c.systemic_levels)
        if (!(l > 0.0 && l < 1.0)) fail("systemic levels must lie in (0, 1)");
    if (c.output_dir.empty()) fail("output_dir is empty");
}

std::string_view to_string(Stage s) noexcept
{
    switch (s) {
    case Stage::Ingest: return "ingest";
    case Stage::Spreads: return "spreads";
    case Stage::StaticTails: return "static-tails";
    case Stage::FitDynamics: return "fit-dynamics";
    case Stage::Simulate: return "simulate";
    case Stage::PriceOptions: return "price-options";
    case Stage::ImpliedVol: return "implied-vol";
    case Stage::Rachev: return "rachev";
    case Stage::Systemic: return "systemic";
    }
    return "?";
}

const std::vector<Stage>& all_stages()
{
    static const std::vector<Stage> v{Stage::Ingest,       Stage::Spreads,    Stage::StaticTails,
                                      Stage::FitDynamics,  Stage::Simulate,   Stage::PriceOptions,
                                      Stage::ImpliedVol,   Stage::Rachev,     Stage::Systemic};
    return v;
}

Stage parse_stage(std::string_view name)
{
    for (Stage s : all_stages())
        if (to_string(s) == name) return s;
    throw ConfigError("unknown stage '" + std::string(name) + "'");
}

StagePlan plan(const Config& cfg, Stage s)
{
    const Layout L{cfg.output_dir};
    StagePlan p;
    auto indexes = [&](const std::string& t, const std::vector<IndexKind>& kinds, const std::vector<int>& depths) {
        for (IndexKind k : kinds)
            for (int d : depths) p.inputs.push_back(L.index_csv(t, k, d));
    };
    auto fits = [&](const std::string& t, IndexKind k, std::vector<fs::path>& into) {
        for (int d : cfg.depths) into.push_back(L.per_depth(t, k, "fit", d, ".json"));
        into.push_back(L.file(t, k, "residuals.bin"));
    };
    for (const auto& in : cfg.inputs) {
        const std::string& t = in.ticker;
        switch (s) {
        case Stage::Ingest:
            p.inputs.push_back(in.orderbook);
            if (!in.messages.empty()) p.inputs.push_back(in.messages);
            p.outputs.push_back(L.book(t));
            p.outputs.push_back(L.ingest_summary(t));
            break;
        case Stage::Spreads:
            p.inputs.push_back(L.book(t));
            for (IndexKind k : cfg.kinds) {
                for (int d : cfg.depths) p.outputs.push_back(L.index_csv(t, k, d));
                p.outputs.push_back(L.ewp_csv(t, k));
            }
            break;
        case Stage::StaticTails:
            indexes(t, cfg.kinds, cfg.depths);
            for (IndexKind k : cfg.kinds) {
                for (const char* f : {"gpd_fits.csv", "rank_fit.csv", "kurtosis.csv"}) p.outputs.push_back(L.file(t, k, f));
                for (const auto& stem : kStaticPerDepth)
                    for (int d : cfg.depths) p.outputs.push_back(L.per_depth(t, k, stem, d, ".csv"));
            }
            break;
        case Stage::FitDynamics:
            indexes(t, cfg.dynamics_kinds, cfg.depths);
            for (IndexKind k : cfg.dynamics_kinds) {
                fits(t, k, p.outputs);
                p.outputs.push_back(L.file(t, k, "model_selection.csv"));
            }
            break;
        case Stage::Simulate:
            for (IndexKind k : cfg.dynamics_kinds) {
                fits(t, k, p.inputs);
                for (const char* f : {"scenarios.bin", "scenarios_sample.csv", "dynamic_tails.csv"})
                    p.outputs.push_back(L.file(t, k, f));
            }
            break;
        case Stage::PriceOptions:
            indexes(t, cfg.pricing.kinds, pricing_depths(cfg));
            for (IndexKind k : cfg.pricing.kinds)
                for (int d : pricing_depths(cfg)) {
                    p.outputs.push_back(L.per_depth(t, k, "ndig", d, ".json"));
                    p.outputs.push_back(L.per_depth(t, k, "prices", d, ".csv"));
                }
            break;
        case Stage::ImpliedVol:
            for (IndexKind k : cfg.pricing.kinds)
                for (int d : pricing_depths(cfg)) {
                    p.inputs.push_back(L.per_depth(t, k, "ndig", d, ".json"));
                    p.inputs.push_back(L.per_depth(t, k, "prices", d, ".csv"));
                    p.outputs.push_back(L.per_depth(t, k, "surface", d, ".csv"));
                }
            break;
        case Stage::Rachev:
            indexes(t, cfg.kinds, cfg.depths);
            break;
        case Stage::Systemic:
            if (!cfg.dynamics_kinds.empty()) {
                p.inputs.push_back(L.file(t, cfg.dynamics_kinds.front(), "scenarios.bin"));
                p.outputs.push_back(L.systemic(t));
            }
            break;
        }
    }
    if (s == Stage::Rachev) p.outputs.push_back(L.rachev());
    return p;
}

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h)
{
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string file_digest(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    std::uint64_t h = 0xcbf29ce484222325ULL;
    std::vector<char> buf(1 << 16);
    while (in) {
        in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
        h = fnv1a(std::string_view(buf.data(), static_cast<std::size_t>(in.gcount())), h);
    }
    return hex(h);
}

std::uint64_t derive_seed(std::uint64_t seed, std::string_view label)
{
    std::uint64_t h = fnv1a(label, fnv1a(std::string_view(reinterpret_cast<const char*>(&seed), sizeof seed)));
    // splitmix finalizer
    h = (h ^ (h >> 30)) * 0xbf58476d1ce4e5b9ULL;
    h = (h ^ (h >> 27)) * 0x94d049bb133111ebULL;
    return h ^ (h >> 31);
}

fs::path manifest_path(const Config& cfg) { return cfg.output_dir / "manifest.json"; }

RunManifest read_manifest(const fs::path& path)
{
    const json j = read_json(path);
    RunManifest m;
    try {
        m.config_hash = j.at("config_hash").get<std::string>();
        m.tool_version = j.at("tool_version").get<std::string>();
        m.seed = j.at("seed").get<std::uint64_t>();
        m.failed_stage = j.value("failed_stage", "");
        for (const auto& [name, r] : j.at("stages").items()) {
            StageRecord rec;
            rec.config_hash = r.at("config_hash").get<std::string>();
            rec.skipped = r.at("skipped").get<bool>();
            rec.wall_s = r.at("wall_s").get<double>();
            rec.inputs = r.at("inputs").get<std::map<std::string, std::string>>();
            rec.outputs = r.at("outputs").get<std::map<std::string, std::string>>();
            m.stages[name] = std::move(rec);
        }
    } catch (const json::exception& e) {
        throw DataError(path.string() + ": " + e.what());
    }
    return m;
}

void write_manifest(const RunManifest& m, const fs::path& path)
{
    json j;
    j["config_hash"] = m.config_hash;
    j["tool_version"] = m.tool_version;
    j["seed"] = m.seed;
    j["failed_stage"] = m.failed_stage;
    json stages = json::object();
    for (const auto& [name, r] : m.stages)
        stages[name] = {{"config_hash", r.config_hash},
                        {"skipped", r.skipped},
                        {"wall_s", r.wall_s},
                        {"inputs", r.inputs},
                        {"outputs", r.outputs}};
    j["stages"] = stages;
    spit(path, j.dump(2) + "\n");
}

RunManifest run(const Config& cfg, const std::vector<Stage>& stages, const RunOptions& opts)
{
    validate(cfg);
    fs::create_directories(cfg.output_dir);
    const fs::path mpath = manifest_path(cfg);
    RunManifest m;
    if (fs::exists(mpath)) {
        try {
            m = read_manifest(mpath);
        } catch (const DataError&) {
            m = {};  // unreadable manifest: rerun everything
        }
    }
    m.config_hash = hex(fnv1a(to_json(cfg)));
    m.tool_version = std::string(kToolVersion);
    m.seed = cfg.seed;
    m.failed_stage.clear();

    for (Stage s : stages) {
        const std::string name(to_string(s));
        const StagePlan pl = plan(cfg, s);
        auto digests = [&](const std::vector<fs::path>& files) {
            std::map<std::string, std::string> out;
            for (const auto& f : files) out[manifest_key(f, cfg.output_dir)] = file_digest(f);
            return out;
        };

        for (const auto& f : pl.inputs)
            if (!fs::is_regular_file(f)) {
                m.failed_stage = name;
                write_manifest(m, mpath);
                throw DataError(name + ": missing input " + f.string() + " (run the upstream stage first)");
            }

        const auto it = m.stages.find(name);
        if (!opts.force && it != m.stages.end() && it->second.config_hash == m.config_hash &&
            it->second.outputs.size() == pl.outputs.size() &&
            std::all_of(pl.outputs.begin(), pl.outputs.end(), [](const fs::path& f) { return fs::is_regular_file(f); }) &&
            it->second.inputs == digests(pl.inputs) && it->second.outputs == digests(pl.outputs)) {
            it->second.skipped = true;
            it->second.wall_s = 0.0;
            continue;
        }

        StageRecord rec;
        rec.config_hash = m.config_hash;
        rec.inputs = digests(pl.inputs);
        const auto t0 = std::chrono::steady_clock::now();
        try {
            run_stage(cfg, s);
            for (const auto& f : pl.outputs)
                if (!fs::is_regular_file(f)) throw Error("stage did not write " + f.string());
        } catch (const std::exception& e) {
            m.stages.erase(name);
            m.failed_stage = name;
            write_manifest(m, mpath);
            rethrow_prefixed(name, e);
        }
        rec.wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        rec.outputs = digests(pl.outputs);
        m.stages[name] = std::move(rec);
        write_manifest(m, mpath);
    }
    write_manifest(m, mpath);
    return m;
}

}  // namespace lobtail::pipeline
