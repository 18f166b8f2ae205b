/*
 * Copyright (c) 2026 the translog authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *   http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "translog/drain.hpp"
#include "translog/embedder.hpp"
#include "translog/sessionizer.hpp"
#include "translog/synth.hpp"

using namespace translog;

namespace {

std::vector<std::string> class_names() {
    std::vector<std::string> out;
    for (const auto& [name, stems] : shared_class_registry()) out.push_back(name);
    return out;
}

DomainSpec demo_spec(std::uint64_t seed = 4001, double rate = 0.05) {
    return detail::build_domain("demo", seed, class_names(), rate, 6);
}

MineResult mine_contents(const GeneratedCorpus& corpus) {
    const LineFormat fmt = LineFormat::parse("label content");
    std::vector<std::string> contents;
    for (const auto& line : corpus.lines) contents.push_back(fmt.split(line).content);
    ParserConfig pc;
    pc.mask_patterns = mask_preset("synth");
    return mine_corpus(contents, pc);
}

}  // namespace

TEST(Synth, GenerationIsDeterministic) {
    const DomainSpec spec = demo_spec();
    const auto a = generate(spec, 2000);
    const auto b = generate(spec, 2000);
    EXPECT_EQ(a.lines, b.lines);
    EXPECT_EQ(a.classes, b.classes);
}

TEST(Synth, ZeroRateMeansZeroAnomalies) {
    const auto corpus = generate(demo_spec(4001, 0.0), 5000);
    for (const auto& c : corpus.classes) EXPECT_TRUE(c.empty());
    for (const auto& l : corpus.lines) EXPECT_EQ(l.substr(0, 2), "- ");
}

TEST(Synth, RateAtOrAboveOneRejected) {
    DomainSpec spec = demo_spec();
    spec.anomaly_rate = 1.0;
    EXPECT_THROW(generate(spec, 10), ConfigError);
}

TEST(Synth, SpecValidation) {
    DomainSpec spec = demo_spec();
    spec.normals.resize(1);
    EXPECT_THROW(generate(spec, 10), ConfigError);
    spec = demo_spec();
    spec.anomalies.clear();
    EXPECT_THROW(generate(spec, 10), ConfigError);
    spec = demo_spec();
    spec.anomalies[0].anomaly_class.clear();
    EXPECT_THROW(generate(spec, 10), ConfigError);
}

TEST(Synth, AnomalousCountWithinFourSigmaOfBurstModel) {
    const double rate = 0.05;
    const std::size_t n = 20000;
    const auto corpus = generate(demo_spec(913, rate), n);
    std::size_t anomalous = 0;
    for (const auto& c : corpus.classes) anomalous += c.empty() ? 0 : 1;
    const double mu = double(n) * rate;
    const double sigma = std::sqrt(double(n) * rate * (1.0 - rate));
    EXPECT_NEAR(double(anomalous), mu, 4.0 * sigma);
}

TEST(Synth, AnomaliesClusterIntoBursts) {
    // bursts are 1-3 lines; adjacent bursts may merge, so test the run-length
    // distribution instead of individual runs: mean near the burst mean of 2,
    // and runs needing 3+ adjacent bursts essentially absent
    const auto corpus = generate(demo_spec(77, 0.08), 10000);
    std::vector<std::size_t> runs;
    std::size_t run = 0;
    for (std::size_t i = 0; i <= corpus.classes.size(); ++i) {
        const bool anomalous = i < corpus.classes.size() && !corpus.classes[i].empty();
        if (anomalous) {
            ++run;
        } else if (run > 0) {
            runs.push_back(run);
            run = 0;
        }
    }
    ASSERT_GT(runs.size(), 50u);
    double mean = 0.0;
    std::size_t long_runs = 0;
    for (auto r : runs) {
        mean += double(r);
        long_runs += r > 6 ? 1 : 0;
    }
    mean /= double(runs.size());
    EXPECT_GT(mean, 1.6);
    EXPECT_LT(mean, 3.2);
    EXPECT_LT(double(long_runs) / double(runs.size()), 0.02);
}

TEST(Synth, LabelPrefixIsParseable) {
    const auto corpus = generate(demo_spec(), 500);
    const LineFormat fmt = LineFormat::parse("label content");
    for (std::size_t i = 0; i < corpus.lines.size(); ++i) {
        const auto f = fmt.split(corpus.lines[i]);
        if (corpus.classes[i].empty())
            EXPECT_EQ(f.label, "-");
        else
            EXPECT_EQ(f.label, corpus.classes[i]);
        EXPECT_FALSE(f.content.empty());
    }
}

TEST(Synth, PairedDomainsHaveDisjointVocabularies) {
    const auto [source, target] = paired_domains(class_names(), 100, 200);
    const auto sv = source.vocabulary();
    const auto tv = target.vocabulary();
    for (const auto& tok : tv) EXPECT_EQ(sv.count(tok), 0u) << tok;
    EXPECT_GE(sv.size(), 20u);
    EXPECT_THROW(paired_domains({"io_timeout"}, 1, 2), ConfigError);
}

TEST(Synth, BothDomainsEmitEverySharedClass) {
    const auto [source, target] = paired_domains(class_names(), 100, 200);
    for (const auto* spec : {&source, &target}) {
        const auto corpus = generate(*spec, 10000);
        std::set<std::string> seen;
        for (const auto& c : corpus.classes)
            if (!c.empty()) seen.insert(c);
        for (const auto& cls : class_names()) EXPECT_EQ(seen.count(cls), 1u) << cls;
    }
}

TEST(Synth, MinedTemplateTablesAreDisjointAcrossDomains) {
    const auto [source, target] = paired_domains(class_names(), 300, 400);
    const auto rs = mine_contents(generate(source, 5000));
    const auto rt = mine_contents(generate(target, 5000));
    std::set<std::string> s_templates;
    for (const auto& t : rs.templates) s_templates.insert(t.joined());
    for (const auto& t : rt.templates) EXPECT_EQ(s_templates.count(t.joined()), 0u);
}

TEST(Synth, TemplateCountStaysNearPatternCount) {
    const auto spec = demo_spec();
    const auto r = mine_contents(generate(spec, 20000));
    EXPECT_LE(r.templates.size(),
              static_cast<std::size_t>(double(spec.pattern_count()) * 1.1));
    EXPECT_GE(r.templates.size(), spec.pattern_count() - 1);
}

TEST(Synth, GroundTruthRoundTripsThroughWindows) {
    const auto spec = demo_spec(515, 0.06);
    const auto corpus = generate(spec, 4000);
    const auto mined = mine_contents(corpus);
    ASSERT_TRUE(mined.issues.empty());
    const LineFormat fmt = LineFormat::parse("label content");
    std::vector<LabeledLine> lines;
    for (std::size_t i = 0; i < corpus.lines.size(); ++i) {
        const auto f = fmt.split(corpus.lines[i]);
        lines.push_back(LabeledLine{i, i, static_cast<int>(mined.assignments[i]),
                                    f.label != "-", ""});
    }
    const auto sessions = window_sessions(lines, 20, spec.name);
    std::size_t cursor = 0;
    for (const auto& s : sessions) {
        bool any = false;
        for (std::size_t j = 0; j < s.template_ids.size(); ++j, ++cursor)
            any = any || !corpus.classes[cursor].empty();
        EXPECT_EQ(s.label, any);
    }
    EXPECT_EQ(cursor, corpus.lines.size());
}

TEST(Synth, SharedClassTemplatesCorrelateAcrossDomainsInHashedSpace) {
    const auto [source, target] = paired_domains(class_names(), 700, 800);
    const int dim = 128;
    const std::uint64_t seed = 5;
    auto embed_pattern = [&](const Pattern& p) {
        std::vector<std::string> toks;
        for (const auto& t : p.tokens)
            toks.push_back(t.kind == PatternToken::Kind::kLiteral ? t.text : "<*>");
        return hashed_embedding(toks, dim, seed);
    };
    auto cosine = [](const std::vector<float>& a, const std::vector<float>& b) {
        double dot = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) dot += double(a[i]) * b[i];
        return dot;  // unit vectors
    };
    double same_class = 0.0, cross_normal = 0.0;
    std::size_t pairs = 0;
    for (std::size_t c = 0; c < source.anomalies.size(); ++c)
        same_class += cosine(embed_pattern(source.anomalies[c]),
                             embed_pattern(target.anomalies[c]));
    same_class /= double(source.anomalies.size());
    for (const auto& sp : source.normals)
        for (const auto& tp : target.normals) {
            cross_normal += std::abs(cosine(embed_pattern(sp), embed_pattern(tp)));
            ++pairs;
        }
    cross_normal /= double(pairs);
    // the mechanical counterpart of shared anomaly semantics: same-class
    // templates must sit visibly closer than unrelated cross-domain pairs
    EXPECT_GT(same_class, 0.15);
    EXPECT_GT(same_class, cross_normal + 0.1);
}

TEST(Synth, SharedStemFractionNearTarget) {
    const auto spec = demo_spec();
    std::set<std::string> shared_pool;
    for (const auto& [name, stems] : shared_class_registry())
        for (const auto& s : stems) shared_pool.insert(s);
    for (const auto& p : spec.anomalies) {
        std::size_t total = 0, shared = 0;
        for (const auto& t : p.tokens) {
            if (t.kind != PatternToken::Kind::kLiteral) continue;
            for (const auto& stem : token_stems(t.text)) {
                ++total;
                shared += shared_pool.count(stem) ? 1 : 0;
            }
        }
        const double frac = double(shared) / double(total);
        EXPECT_GE(frac, 0.2) << p.anomaly_class;
        EXPECT_LE(frac, 0.45) << p.anomaly_class;
    }
}
