#include "tofbench/error.hpp"
#include "tofbench/operators.hpp"

#include "doctest.h"

#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

using namespace tofbench;
using namespace tofbench::ops;

namespace {

constexpr double deg = std::numbers::pi / 180.0;

DetectorGeometry at_two_theta(double two_theta_deg, double L2, double L1 = 20.0,
                              double phi = 0.0) {
  const double tt = two_theta_deg * deg;
  return DetectorGeometry({L2 * std::sin(tt) * std::cos(phi),
                           L2 * std::sin(tt) * std::sin(phi),
                           L2 * std::cos(tt)},
                          L1, 0.01, 1.0);
}

// Inverse TOF relation t = (2 m_n / h) L sin(theta) d, in microseconds.
double tof_for_d(double d_A, double L_m, double theta) {
  return 2.0 * L_m * std::sin(theta) * d_A * 1e-10 /
         PhysicalConstants::h_over_mn * 1e6;
}

// O(n*m) overlap redistribution used as an independent check of the
// sweeping implementation.
std::vector<double> brute_rebin(const std::vector<double> &old_edges,
                                const std::vector<double> &counts,
                                const std::vector<double> &new_edges) {
  std::vector<double> out(new_edges.size() - 1, 0.0);
  for (std::size_t j = 0; j + 1 < new_edges.size(); ++j)
    for (std::size_t i = 0; i + 1 < old_edges.size(); ++i) {
      const double lo = std::max(old_edges[i], new_edges[j]);
      const double hi = std::min(old_edges[i + 1], new_edges[j + 1]);
      if (hi > lo)
        out[j] += counts[i] * (hi - lo) / (old_edges[i + 1] - old_edges[i]);
    }
  return out;
}

std::vector<float> vec(std::span<const float> s) {
  return {s.begin(), s.end()};
}

double total(const DataSet &ds) {
  double t = 0;
  for (const auto &s : ds.spectra())
    t += s.total_counts();
  return t;
}

} // namespace

TEST_CASE("physical constant matches CODATA quotient") {
  const double codata =
      PhysicalConstants::planck_Js / PhysicalConstants::neutron_mass_kg;
  CHECK(std::abs(codata / PhysicalConstants::h_over_mn - 1.0) < 1e-6);
}

TEST_CASE("focus_factor") {
  CHECK(focus_factor(3.0, 0.4, 3.0, 0.4) == doctest::Approx(1.0));
  CHECK(focus_factor(2.0, 45 * deg, 1.0, 30 * deg) ==
        doctest::Approx(2.8284271247).epsilon(1e-9));
  CHECK_THROWS_AS(focus_factor(2.0, 0.0, 1.0, 0.3), DataError);
  CHECK_THROWS_AS(focus_factor(-1.0, 0.3, 1.0, 0.3), DataError);
  CHECK_THROWS_AS(focus_factor(1.0, 0.3, 1.0, std::numbers::pi / 2),
                  DataError);
  CHECK_THROWS_AS(FocusParams(0.0, 20, 1), DataError);
}

TEST_CASE("time_focus at the reference geometry is the identity") {
  auto g = at_two_theta(90, 1.5);
  Spectrum s(0, XScale::uniform(1000, 20000, 100),
             std::vector<float>(100, 3.0f), {}, {}, "a", 0, g);
  DataSet ds("bank", XUnits::tof_us, "counts", {s});
  auto out = time_focus(ds, FocusParams(g.theta(), 20.0, g.secondary_path()));
  CHECK(out == ds);
}

TEST_CASE("time_focus halves edges when sin(theta) doubles") {
  // Same total path, sin(theta_i) = 2 sin(theta_r): f = 2.
  const double theta_r = std::asin(0.25);
  const double theta_i = std::asin(0.5);
  DetectorGeometry g({std::sin(2 * theta_i), 0, std::cos(2 * theta_i)}, 20.0,
                     0, 1);
  Spectrum s(7, XScale::explicit_edges({1000, 2000, 4000}),
             std::vector<float>{5, 6}, {}, {}, "x", 0, g);
  DataSet ds("b", XUnits::tof_us, "counts", {s});
  auto out = time_focus(ds, FocusParams(theta_r, 20.0, 1.0));
  auto e = out.spectra()[0].xscale().edges();
  CHECK(e[0] == doctest::Approx(500));
  CHECK(e[1] == doctest::Approx(1000));
  CHECK(e[2] == doctest::Approx(2000));
  CHECK(vec(out.spectra()[0].counts()) == std::vector<float>{5, 6});
  CHECK(out.spectra()[0].geometry()->theta() == doctest::Approx(theta_r));
  CHECK(out.spectra()[0].geometry()->total_path() == doctest::Approx(21.0));
}

TEST_CASE("time_focus rejects spectra without geometry") {
  DataSet ds("b", XUnits::tof_us, "counts",
             {Spectrum(42, XScale::uniform(0, 1, 1), {1})});
  try {
    time_focus(ds, FocusParams(0.5, 20, 1));
    FAIL("expected error");
  } catch (const DataError &e) {
    CHECK(std::string(e.what()).find("42") != std::string::npos);
  }
  DataSet wrong("w", XUnits::dspacing_A, "counts", {});
  CHECK_THROWS_AS(time_focus(wrong, FocusParams(0.5, 20, 1)), DataError);
}

TEST_CASE("focused bank peaks line up in d-spacing") {
  const double d0 = 2.0;
  const double L1 = 20.0;
  const std::vector<std::pair<double, double>> detectors{
      {80, 1.2}, {85, 1.5}, {90, 1.0}, {95, 2.0}, {100, 1.7}};
  const auto xs = XScale::uniform(5000, 20000, 3000);

  std::vector<Spectrum> spectra;
  double sum_before = 0;
  for (std::uint32_t k = 0; k < detectors.size(); ++k) {
    auto g = at_two_theta(detectors[k].first, detectors[k].second, L1);
    const double t0 = tof_for_d(d0, g.total_path(), g.theta());
    std::vector<float> c(xs.bin_count());
    for (std::uint32_t i = 0; i < c.size(); ++i) {
      const double x = xs.bin_center(i);
      c[i] = static_cast<float>(1000.0 * std::exp(-0.5 * std::pow((x - t0) / 8.0, 2)));
      sum_before += c[i];
    }
    spectra.emplace_back(k, xs, std::move(c), std::nullopt, Attributes{}, "",
                         0, g);
  }
  DataSet bank("bank", XUnits::tof_us, "counts", std::move(spectra));

  FocusParams ref(45 * deg, L1, 1.5);
  auto focused = time_focus(bank, ref);
  CHECK(total(focused) == doctest::Approx(sum_before).epsilon(1e-12));

  auto d = convert_units(focused, XUnits::dspacing_A);
  for (const auto &s : d.spectra()) {
    auto c = s.counts();
    auto imax = std::distance(c.begin(), std::max_element(c.begin(), c.end()));
    const double width = s.xscale().bin_width(imax);
    CHECK(std::abs(s.xscale().bin_center(imax) - d0) <= width);
  }
}

TEST_CASE("convert_units reference values") {
  auto g = at_two_theta(90, 1.0, 19.0); // total path 20 m
  Spectrum s(0, XScale::explicit_edges({5000, 6000}), std::vector<float>{7},
             {}, {}, "", 0, g);
  DataSet ds("d", XUnits::tof_us, "counts", {s});

  CHECK(tof_to_wavelength(5000, 20) == doctest::Approx(0.989008475).epsilon(1e-12));

  auto lam = convert_units(ds, XUnits::wavelength_A);
  CHECK(lam.x_units() == XUnits::wavelength_A);
  CHECK(lam.spectra()[0].xscale().front() ==
        doctest::Approx(0.989008475).epsilon(1e-9));

  auto d = convert_units(ds, XUnits::dspacing_A);
  CHECK(d.spectra()[0].xscale().front() ==
        doctest::Approx(0.6993345993).epsilon(1e-9));

  auto q = convert_units(ds, XUnits::Q_invA);
  // Q edges reverse: the 5000 us edge becomes the upper Q edge.
  CHECK(q.spectra()[0].xscale().back() ==
        doctest::Approx(8.9845194464).epsilon(1e-9));
  CHECK(q.spectra()[0].counts()[0] == 7.0f);
}

TEST_CASE("convert_units to Q reverses bins and keeps edges increasing") {
  auto g = at_two_theta(60, 1.0);
  Spectrum s(0, XScale::uniform(1000, 4000, 3), std::vector<float>{1, 2, 3},
             std::vector<float>{0.1f, 0.2f, 0.3f}, {}, "", 0, g);
  DataSet ds("d", XUnits::tof_us, "counts", {s});
  auto q = convert_units(ds, XUnits::Q_invA);
  const auto &qs = q.spectra()[0];
  CHECK(vec(qs.counts()) == std::vector<float>{3, 2, 1});
  CHECK(vec(qs.errors()) == std::vector<float>{0.3f, 0.2f, 0.1f});
  auto e = qs.xscale().edges();
  for (std::size_t i = 1; i < e.size(); ++i)
    CHECK(e[i] > e[i - 1]);
  // Q = 2 pi / d per edge.
  auto d = convert_units(ds, XUnits::dspacing_A);
  auto de = d.spectra()[0].xscale().edges();
  for (std::size_t i = 0; i < e.size(); ++i)
    CHECK(e[i] == doctest::Approx(2 * std::numbers::pi / de[de.size() - 1 - i]));
}

TEST_CASE("convert_units errors") {
  auto g = at_two_theta(90, 1.0);
  Spectrum zero_edge(0, XScale::uniform(0, 100, 10),
                     std::vector<float>(10, 1.0f), {}, {}, "", 0, g);
  DataSet ds("d", XUnits::tof_us, "counts", {zero_edge});
  CHECK(convert_units(ds, XUnits::wavelength_A).spectra()[0].xscale().front() ==
        0.0);
  CHECK_THROWS_AS(convert_units(ds, XUnits::Q_invA), DataError);

  DataSet no_geom("d", XUnits::tof_us, "counts",
                  {Spectrum(3, XScale::uniform(1, 2, 1), {1})});
  CHECK_THROWS_AS(convert_units(no_geom, XUnits::wavelength_A), DataError);

  DetectorGeometry forward({0, 0, 1}, 20, 0, 1);
  DataSet fwd("d", XUnits::tof_us, "counts",
              {Spectrum(3, XScale::uniform(1, 2, 1), {1}, {}, {}, "", 0,
                        forward)});
  CHECK_NOTHROW(convert_units(fwd, XUnits::wavelength_A));
  CHECK_THROWS_AS(convert_units(fwd, XUnits::dspacing_A), DataError);

  auto lam = convert_units(ds, XUnits::wavelength_A);
  CHECK_THROWS_AS(convert_units(lam, XUnits::dspacing_A), DataError);
}

TEST_CASE("rebin examples") {
  Spectrum s(0, XScale::explicit_edges({0, 1, 2}), std::vector<float>{4, 6},
             std::vector<float>{2.0f, std::sqrt(6.0f)});
  CHECK(rebin(s, s.xscale()) == s);

  auto coarse = rebin(s, XScale::explicit_edges({0, 2}));
  CHECK(coarse.counts()[0] == doctest::Approx(10));
  CHECK(coarse.errors()[0] == doctest::Approx(3.16227766));

  Spectrum c(0, XScale::explicit_edges({0, 2}), std::vector<float>{10},
             std::vector<float>{std::sqrt(10.0f)});
  auto fine = rebin(c, XScale::explicit_edges({0, 1, 2}));
  CHECK(fine.counts()[0] == doctest::Approx(5));
  CHECK(fine.counts()[1] == doctest::Approx(5));
  CHECK(fine.errors()[0] == doctest::Approx(2.2360680));
  CHECK(fine.errors()[1] == doctest::Approx(2.2360680));

  // Counts outside the target range are dropped.
  auto part = rebin(s, XScale::explicit_edges({0.5, 1.0}));
  CHECK(part.counts()[0] == doctest::Approx(2));
}

TEST_CASE("rebin_values matches a brute-force overlap oracle") {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto random_edges = [&](double lo, double hi, int n) {
    std::vector<double> e{lo, hi};
    for (int i = 0; i < n - 1; ++i)
      e.push_back(lo + (hi - lo) * u(rng));
    std::sort(e.begin(), e.end());
    e.erase(std::unique(e.begin(), e.end()), e.end());
    return e;
  };
  for (int trial = 0; trial < 200; ++trial) {
    auto old_e = random_edges(0, 10, 2 + trial % 30);
    auto new_e = random_edges(-1 + 3 * u(rng), 8 + 4 * u(rng), 2 + trial % 17);
    std::vector<double> c(old_e.size() - 1), v(c.size());
    for (std::size_t i = 0; i < c.size(); ++i) {
      c[i] = 100 * u(rng);
      v[i] = c[i];
    }
    auto r = rebin_values(old_e, c, v, new_e);
    auto oracle = brute_rebin(old_e, c, new_e);
    REQUIRE(r.counts.size() == oracle.size());
    for (std::size_t j = 0; j < oracle.size(); ++j) {
      CHECK(r.counts[j] == doctest::Approx(oracle[j]).epsilon(1e-12));
      CHECK(r.variances[j] == doctest::Approx(oracle[j]).epsilon(1e-12));
    }
  }
}

TEST_CASE("spectrum rebin conserves counts within f32 storage precision") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    auto xs = XScale::uniform(100, 200, 50 + trial);
    std::vector<float> c(xs.bin_count());
    for (auto &x : c)
      x = static_cast<float>(1000 * u(rng));
    Spectrum s(0, xs, c);
    auto out = rebin(s, XScale::uniform(90, 210, 37 + trial));
    CHECK(out.total_counts() == doctest::Approx(s.total_counts()).epsilon(1e-6));
  }
}

TEST_CASE("group_spectra") {
  auto xs = XScale::uniform(0, 10, 10);
  Spectrum a(1, xs, std::vector<float>(10, 4.0f));
  Spectrum b(2, xs, std::vector<float>(10, 4.0f));

  DataSet ds("d", XUnits::tof_us, "counts", {a, b});
  auto identity = group_spectra(ds, {{1, 10}, {2, 20}});
  REQUIRE(identity.size() == 2);
  CHECK(vec(identity.spectra()[0].counts()) == vec(a.counts()));
  CHECK(vec(identity.spectra()[1].errors()) == vec(b.errors()));

  auto pair = group_spectra(ds, {{1, 0}, {2, 0}});
  REQUIRE(pair.size() == 1);
  CHECK(pair.spectra()[0].counts()[3] == doctest::Approx(8));
  CHECK(pair.spectra()[0].errors()[3] == doctest::Approx(2 * std::sqrt(2.0)));

  CHECK_THROWS_AS(group_spectra(ds, {{1, 0}}), DataError);
}

TEST_CASE("group_spectra conserves totals across mismatched scales") {
  std::mt19937_64 rng(160);
  std::uniform_real_distribution<double> u(0.0, 50.0);
  std::vector<Spectrum> spectra;
  std::map<std::uint32_t, std::uint32_t> grouping;
  double expected = 0;
  for (std::uint32_t id = 0; id < 160; ++id) {
    // Every member's range sits inside the group's first x-scale.
    auto xs = (id % 40 == 0) ? XScale::uniform(0, 1000, 200)
                             : XScale::uniform(10 + id % 7, 900 - id % 5,
                                               100 + id % 13);
    std::vector<float> c(xs.bin_count());
    for (auto &x : c) {
      x = static_cast<float>(u(rng));
      expected += x;
    }
    spectra.emplace_back(id, xs, std::move(c));
    grouping[id] = id / 40;
  }
  DataSet ds("d", XUnits::tof_us, "counts", std::move(spectra));
  auto g = group_spectra(ds, grouping);
  CHECK(g.size() == 4);
  CHECK(total(g) == doctest::Approx(expected).epsilon(1e-6));
}

TEST_CASE("normalize") {
  auto xs = XScale::uniform(0, 2, 2);
  DataSet ds("d", XUnits::tof_us, "counts",
             {Spectrum(0, xs, {4, 8}, std::vector<float>{2, 2.83f})});
  auto n = normalize(ds, NormalizeByScalar{2});
  CHECK(vec(n.spectra()[0].counts()) == std::vector<float>{2, 4});
  CHECK(n.spectra()[0].errors()[1] == doctest::Approx(1.415));
  REQUIRE(n.attribute("normalized_by"));
  CHECK(std::get<std::string>(*n.attribute("normalized_by")) == "scalar:2");

  auto one = normalize(ds, NormalizeByScalar{1});
  CHECK(one.spectra() == ds.spectra());

  Spectrum monitor(99, XScale::uniform(0, 1000, 1000),
                   std::vector<float>(1000, 1000.0f));
  auto m = normalize(ds, NormalizeByMonitor{&monitor});
  CHECK(m.spectra()[0].counts()[0] == doctest::Approx(4e-6));

  CHECK_THROWS_AS(normalize(ds, NormalizeByScalar{0}), DataError);
  CHECK_THROWS_AS(normalize(ds, NormalizeByTime{-1}), DataError);
  Spectrum dead(1, xs, {0, 0});
  CHECK_THROWS_AS(normalize(ds, NormalizeByMonitor{&dead}), DataError);
}

TEST_CASE("normalize by k then 1/k is the identity") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.1, 1000);
  auto xs = XScale::uniform(0, 64, 64);
  std::vector<float> c(64);
  for (auto &x : c)
    x = static_cast<float>(u(rng));
  DataSet ds("d", XUnits::tof_us, "counts", {Spectrum(0, xs, c)});
  for (double k : {3.0, 0.125, 7.7, 1e6}) {
    auto back = normalize(normalize(ds, NormalizeByScalar{k}),
                          NormalizeByScalar{1.0 / k});
    for (std::size_t i = 0; i < c.size(); ++i)
      CHECK(back.spectra()[0].counts()[i] ==
            doctest::Approx(c[i]).epsilon(1e-6));
  }
}

TEST_CASE("merge") {
  auto xs = XScale::uniform(0, 1, 1);
  DataSet a("a", XUnits::tof_us, "counts",
            {Spectrum(5, xs, {1}), Spectrum(9, xs, {2})});
  DataSet b("b", XUnits::tof_us, "counts", {Spectrum(5, xs, {3})});

  auto ab = merge(a, b);
  REQUIRE(ab.size() == 3);
  CHECK(ab.spectra()[0].id() == 0);
  CHECK(ab.spectra()[2].id() == 2);
  CHECK(ab.spectra()[2].counts()[0] == 3.0f);
  CHECK(ab.title() == "a + b");

  auto e = merge(DataSet::empty(XUnits::dspacing_A), b);
  CHECK(e.x_units() == XUnits::tof_us);
  CHECK(e.title() == "b");
  CHECK(e.spectra()[0].id() == 0);

  DataSet d("d", XUnits::dspacing_A, "counts", {Spectrum(0, xs, {1})});
  try {
    merge(a, d);
    FAIL("expected error");
  } catch (const DataError &err) {
    std::string what = err.what();
    CHECK(what.find("tof_us") != std::string::npos);
    CHECK(what.find("dspacing_A") != std::string::npos);
  }

  // Prefix of a merge equals the first operand up to ids.
  std::vector<std::uint32_t> first{0, 1};
  auto prefix = dataset_select(ab, first);
  for (std::size_t i = 0; i < a.size(); ++i)
    CHECK(prefix.spectra()[i].with_id(0) == a.spectra()[i].with_id(0));
}

TEST_CASE("merging 120 single-spectrum datasets") {
  auto xs = XScale::uniform(0, 10, 10);
  DataSet acc = DataSet::empty(XUnits::tof_us);
  for (int r = 0; r < 120; ++r)
    acc = merge(acc, DataSet("r", XUnits::tof_us, "counts",
                             {Spectrum(3, xs, std::vector<float>(10, r))}));
  REQUIRE(acc.size() == 120);
  for (std::uint32_t i = 0; i < 120; ++i) {
    CHECK(acc.spectra()[i].id() == i);
    CHECK(acc.spectra()[i].counts()[0] == static_cast<float>(i));
  }
}

TEST_CASE("relabel") {
  auto xs = XScale::uniform(0, 1, 1);
  DataSet ds("d", XUnits::tof_us, "counts",
             {Spectrum(0, xs, {1}), Spectrum(1, xs, {1})},
             {Attribute("run_number", std::int64_t{8712}),
              Attribute("start_time", std::int64_t{1020300000})});
  auto r = relabel(ds, "{run_number} {start_time}");
  CHECK(r.spectra()[0].label() == "8712 1020300000");
  CHECK(r.spectra()[1].label() == "8712 1020300000");

  auto f = relabel(ds, "fixed");
  CHECK(f.spectra()[1].label() == "fixed");

  auto ids = relabel(ds, "det-{id}");
  CHECK(ids.spectra()[1].label() == "det-1");

  try {
    relabel(ds, "{bogus}");
    FAIL("expected error");
  } catch (const DataError &e) {
    CHECK(std::string(e.what()).find("bogus") != std::string::npos);
  }
  CHECK_THROWS_AS(LabelTemplate::parse("{run_number"), DataError);

  DataSet bare("d", XUnits::tof_us, "counts", {Spectrum(0, xs, {1})});
  CHECK_THROWS_AS(relabel(bare, "{run_number}"), DataError);
}

TEST_CASE("extract_group") {
  auto xs = XScale::uniform(0, 1, 1);
  std::vector<Spectrum> s;
  for (std::uint32_t i = 0; i < 6; ++i)
    s.emplace_back(i, xs, std::vector<float>{1},
                   std::nullopt,
                   Attributes{Attribute("bank_angle_deg", i % 2 ? 90.0 : 148.0)});
  DataSet ds("run", XUnits::tof_us, "counts", s);

  auto b90 = extract_group(ds, "bank_angle_deg", std::int64_t{90});
  REQUIRE(b90.size() == 3);
  for (const auto &sp : b90.spectra())
    CHECK(sp.id() % 2 == 1);

  CHECK(extract_group(ds, "nope", 1.0).is_empty());

  DataSet all90("run", XUnits::tof_us, "counts", {b90.spectra()});
  CHECK(extract_group(all90, "bank_angle_deg", 90.0) == all90);
}

TEST_CASE("sort_spectra") {
  auto xs = XScale::uniform(0, 1, 1);
  std::vector<Spectrum> s;
  const double angles[] = {60, 20, 40};
  for (std::uint32_t i = 0; i < 3; ++i)
    s.emplace_back(i, xs, std::vector<float>{1}, std::nullopt, Attributes{},
                   "", 0, at_two_theta(angles[i], 1.0));
  DataSet ds("d", XUnits::tof_us, "counts", s);

  CHECK(sort_spectra(ds, "id", true) == ds);

  auto by_theta = sort_spectra(ds, "theta", true);
  CHECK(by_theta.spectra()[0].id() == 1);
  CHECK(by_theta.spectra()[1].id() == 2);
  CHECK(by_theta.spectra()[2].id() == 0);

  auto desc = sort_spectra(ds, "theta", false);
  CHECK(desc.spectra()[0].id() == 0);

  std::vector<Spectrum> labelled{
      Spectrum(0, xs, {1}, std::nullopt, Attributes{Attribute("label", std::string("b"))}),
      Spectrum(1, xs, {1}, std::nullopt, Attributes{Attribute("label", std::string("a"))}),
      Spectrum(2, xs, {1})};
  DataSet lds("l", XUnits::tof_us, "counts", labelled);
  try {
    sort_spectra(lds, "label", true);
    FAIL("expected error");
  } catch (const DataError &e) {
    CHECK(std::string(e.what()).find("spectrum 2") != std::string::npos);
  }
}

TEST_CASE("sort_spectra is stable") {
  auto xs = XScale::uniform(0, 1, 1);
  std::vector<Spectrum> s;
  for (std::uint32_t i = 0; i < 10; ++i)
    s.emplace_back(i, xs, std::vector<float>{1}, std::nullopt,
                   Attributes{Attribute("row", std::int64_t(i % 3))});
  DataSet ds("d", XUnits::tof_us, "counts", s);
  auto sorted = sort_spectra(ds, "row", true);
  std::vector<std::uint32_t> ids;
  for (const auto &sp : sorted.spectra())
    ids.push_back(sp.id());
  CHECK(ids == std::vector<std::uint32_t>{0, 3, 6, 9, 1, 4, 7, 2, 5, 8});
}
