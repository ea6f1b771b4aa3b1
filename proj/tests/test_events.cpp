#include "nnnh/events.hpp"
#include "nnnh/rng.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>

using namespace nnnh;

namespace {

EventStream parse_csv(const std::string& text, LoadOptions opt = {}) {
    std::istringstream in(text);
    return parse_events(in, EventFormat::csv, opt);
}

EventStream random_stream(int dims, std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<Event> ev;
    double t = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        t += rng.exponential(2.0) + 1e-9;
        ev.push_back({t, static_cast<int>(rng.index(static_cast<std::uint64_t>(dims)))});
    }
    return EventStream(ev, dims, Window{0.0, t});
}

} // namespace

TEST(Load, TwoRowCsv) {
    const auto s = parse_csv("1.0,0\n2.0,1");
    EXPECT_EQ(s.size(), 2u);
    EXPECT_EQ(s.dims(), 2);
    EXPECT_DOUBLE_EQ(s.window().hi, 2.0);
    EXPECT_EQ(s.counts(), (std::vector<std::size_t>{1, 1}));
}

TEST(Load, HeaderAndComments) {
    const auto s = parse_csv("time,dim\n# note\n0.5,0\n\n1.5,0\n");
    EXPECT_EQ(s.size(), 2u);
    EXPECT_EQ(s.dims(), 1);
}

TEST(Load, EmptyFileRejected) {
    try {
        (void)parse_csv("");
        FAIL();
    } catch (const ValidationError& e) {
        EXPECT_STREQ(e.what(), "no events");
    }
}

TEST(Load, MalformedRowReportsLine) {
    try {
        (void)parse_csv("1.0,0\n2.0;1\n");
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line(), 2u);
    }
    EXPECT_THROW((void)parse_csv("1.0,0\nabc,1\n"), ParseError);
}

TEST(Load, NegativeTimeOrDim) {
    EXPECT_THROW((void)parse_csv("-1.0,0\n"), ValidationError);
    EXPECT_THROW((void)parse_csv("1.0,-2\n"), ValidationError);
}

TEST(Load, DuplicateWithinDimensionRejected) {
    EXPECT_THROW((void)parse_csv("1.0,0\n1.0,0\n"), ValidationError);
    EXPECT_NO_THROW((void)parse_csv("1.0,0\n1.0,1\n"));
}

TEST(Load, DimsOverride) {
    LoadOptions opt;
    opt.dims = 3;
    opt.horizon = 10.0;
    const auto s = parse_csv("1.0,0\n2.0,1", opt);
    EXPECT_EQ(s.dims(), 3);
    EXPECT_EQ(s.counts()[2], 0u);
    EXPECT_DOUBLE_EQ(s.window().hi, 10.0);
    opt.dims = 1;
    EXPECT_THROW((void)parse_csv("1.0,0\n2.0,1", opt), ValidationError);
}

TEST(Load, UnsortedRowsStableSorted) {
    const auto s = parse_csv("3,0\n1,1\n2,0\n1,0\n");
    ASSERT_EQ(s.size(), 4u);
    EXPECT_EQ(s.events()[0], (Event{1.0, 1}));
    EXPECT_EQ(s.events()[1], (Event{1.0, 0}));
    EXPECT_DOUBLE_EQ(s.events()[3].time, 3.0);
}

TEST(Load, Jsonl) {
    std::istringstream in("{\"t\": 0.25, \"d\": 1}\n{\"t\": 0.5, \"d\": 0}\n");
    const auto s = parse_events(in, EventFormat::jsonl);
    EXPECT_EQ(s.size(), 2u);
    EXPECT_EQ(s.dims(), 2);
    std::istringstream bad("{\"t\": 0.25}\n");
    EXPECT_THROW((void)parse_events(bad, EventFormat::jsonl), ParseError);
}

TEST(Load, CryptoShapedFileRoundTrip) {
    // four order streams with the market-order counts of the exchange data set
    const std::vector<std::size_t> counts{4219, 4374, 3480, 2999};
    Rng rng(11);
    std::vector<Event> ev;
    for (int d = 0; d < 4; ++d) {
        double t = 0.0;
        for (std::size_t k = 0; k < counts[d]; ++k) {
            t += 1.0 + rng.exponential(0.01);
            ev.push_back({std::round(t), d});  // millisecond stamps
        }
    }
    const EventStream s(ev, 4, Window{0.0, 1e9});
    const auto path = std::filesystem::temp_directory_path() / "nnnh_crypto_events.csv";
    write_events_csv(path.string(), s);
    const auto back = load_events(path.string());
    std::filesystem::remove(path);
    EXPECT_EQ(back.size(), 15072u);
    EXPECT_EQ(back.dims(), 4);
    EXPECT_EQ(back.counts(), counts);
}

TEST(Load, CsvRoundTripIsExact) {
    const auto s = random_stream(3, 500, 5);
    std::stringstream buf;
    write_events_csv(buf, s);
    const auto back = parse_events(buf, EventFormat::csv);
    ASSERT_EQ(back.events().size(), s.events().size());
    for (std::size_t i = 0; i < s.events().size(); ++i) EXPECT_EQ(back.events()[i], s.events()[i]);
}

TEST(Scale, UnitFactor) {
    const auto s = parse_csv("1,0\n2,0\n3,0\n4,0");
    const auto [sc, info] = scale_times(s);
    EXPECT_DOUBLE_EQ(info.factor, 1.0);
    EXPECT_DOUBLE_EQ(sc.events()[2].time, 3.0);
}

TEST(Scale, HalfFactor) {
    const auto s = parse_csv("2,0\n4,0");
    const auto [sc, info] = scale_times(s);
    EXPECT_DOUBLE_EQ(info.factor, 0.5);
    EXPECT_DOUBLE_EQ(sc.events()[0].time, 1.0);
    EXPECT_DOUBLE_EQ(sc.events()[1].time, 2.0);
    EXPECT_DOUBLE_EQ(sc.window().hi, 2.0);
}

TEST(Scale, MeanGapIsOne) {
    const auto s = random_stream(2, 4000, 9);
    const auto [sc, info] = scale_times(s);
    const double tmax = sc.events().back().time;
    EXPECT_NEAR(tmax / static_cast<double>(sc.size()), 1.0, 1e-12);
    EXPECT_EQ(info.n_total, 4000u);
}

TEST(Scale, InverseIsIdentity) {
    const auto s = random_stream(3, 2000, 21);
    const auto [sc, info] = scale_times(s);
    const auto back = unscale_times(sc, info);
    for (std::size_t i = 0; i < s.events().size(); ++i) {
        const double a = s.events()[i].time;
        EXPECT_LE(std::abs(back.events()[i].time - a), 1e-12 * std::max(1.0, a));
        EXPECT_EQ(back.events()[i].dim, s.events()[i].dim);
    }
}

TEST(Scale, EmptyStreamRejected) {
    EXPECT_THROW((void)scale_times(EventStream({}, 1, Window{0.0, 1.0})), ValidationError);
}

TEST(Split, TenEvents) {
    std::vector<Event> ev;
    for (int i = 1; i <= 10; ++i) ev.push_back({static_cast<double>(i), 0});
    const EventStream s(ev, 1, Window{0.0, 10.0});
    const auto sp = split_chronological(s);
    EXPECT_EQ(sp.train.size(), 6u);
    EXPECT_EQ(sp.validation.size(), 2u);
    EXPECT_EQ(sp.test.size(), 2u);
    EXPECT_DOUBLE_EQ(sp.train.window().hi, 6.5);
    EXPECT_DOUBLE_EQ(sp.validation.window().lo, 6.5);
    EXPECT_DOUBLE_EQ(sp.test.window().lo, 8.5);
    EXPECT_DOUBLE_EQ(sp.test.window().hi, 10.0);
    // later splits keep earlier events as context
    EXPECT_EQ(sp.test.events().size(), 10u);
    EXPECT_EQ(sp.test.window_begin(), 8u);
    EXPECT_EQ(sp.validation.times(0).size(), 8u);
}

TEST(Split, AllTrain) {
    const auto s = random_stream(2, 100, 3);
    std::vector<std::string> seen;
    auto prev = set_warning_sink([&](std::string_view m) { seen.emplace_back(m); });
    const auto sp = split_chronological(s, {1.0, 0.0, 0.0});
    set_warning_sink(prev);
    EXPECT_EQ(sp.train.size(), 100u);
    EXPECT_TRUE(sp.validation.empty());
    EXPECT_TRUE(sp.test.empty());
    EXPECT_EQ(seen.size(), 2u);
}

TEST(Split, TenThousandEventsProportions) {
    const auto s = random_stream(2, 10001, 17);
    const auto sp = split_chronological(s);
    const double n = 10001.0;
    EXPECT_NEAR(sp.train.size() / n, 0.6, 0.01);
    EXPECT_NEAR(sp.validation.size() / n, 0.2, 0.01);
    EXPECT_NEAR(sp.test.size() / n, 0.2, 0.01);
}

TEST(Split, PreservesCountAndOrder) {
    const auto s = random_stream(3, 777, 23);
    const auto sp = split_chronological(s, {0.5, 0.3, 0.2});
    EXPECT_EQ(sp.train.size() + sp.validation.size() + sp.test.size(), s.size());
    std::vector<Event> cat;
    for (const auto* part : {&sp.train, &sp.validation, &sp.test})
        for (const auto& e : part->window_events()) cat.push_back(e);
    ASSERT_EQ(cat.size(), s.events().size());
    for (std::size_t i = 0; i < cat.size(); ++i) EXPECT_EQ(cat[i], s.events()[i]);
    EXPECT_EQ(sp.train.window().hi, sp.validation.window().lo);
    EXPECT_EQ(sp.validation.window().hi, sp.test.window().lo);
}

TEST(Split, BadRatios) {
    const auto s = random_stream(1, 10, 1);
    EXPECT_THROW((void)split_chronological(s, {0.5, 0.5, 0.5}), std::invalid_argument);
    EXPECT_THROW((void)split_chronological(s, {-0.2, 0.6, 0.6}), std::invalid_argument);
}

TEST(Stream, IntervalStarts) {
    const EventStream s({{1.0, 0}, {2.0, 1}, {3.0, 0}}, 2, Window{0.5, 4.0});
    EXPECT_DOUBLE_EQ(s.interval_start(0), 0.5);
    EXPECT_DOUBLE_EQ(s.interval_start(1), 0.5);
    EXPECT_DOUBLE_EQ(s.interval_start(2), 1.0);
    EXPECT_DOUBLE_EQ(s.last_in_window(0), 3.0);
    EXPECT_DOUBLE_EQ(s.last_in_window(1), 2.0);
}

TEST(Stream, WindowValidation) {
    EXPECT_THROW(EventStream({{5.0, 0}}, 1, Window{0.0, 4.0}), ValidationError);
    EXPECT_THROW(EventStream({{1.0, 2}}, 2, Window{0.0, 4.0}), ValidationError);
    EXPECT_THROW(EventStream({{1.0, 0}}, 0, Window{0.0, 4.0}), ValidationError);
}
