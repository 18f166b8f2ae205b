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

#include <cstdio>
#include <filesystem>
#include <set>

#include "translog/drain.hpp"
#include "translog/rng.hpp"

using namespace translog;

namespace {

ParserConfig digits_config() {
    ParserConfig c;
    c.mask_patterns = {R"(\d+)"};
    return c;
}

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST(Drain, IdenticalLinesShareTemplateZero) {
    DrainParser p(digits_config());
    EXPECT_EQ(p.parse_line("send block 5"), 0);
    EXPECT_EQ(p.parse_line("send block 5"), 0);
    ASSERT_EQ(p.templates().size(), 1u);
    EXPECT_EQ(p.templates()[0].tokens, (std::vector<std::string>{"send", "block", "<*>"}));
    EXPECT_EQ(p.templates()[0].match_count, 2u);
}

TEST(Drain, SimilarLinesMergeIntoWildcardTemplate) {
    // depth covering the first 2 tokens, threshold 0.5: similarity after
    // masking is 3/4, so the lines merge and the differing position becomes
    // a wildcard.
    ParserConfig c = digits_config();
    c.tree_depth = 3;
    c.similarity_threshold = 0.5f;
    DrainParser p(c);
    EXPECT_EQ(p.parse_line("send block 5 ok"), 0);
    EXPECT_EQ(p.parse_line("send block 7 fail"), 0);
    ASSERT_EQ(p.templates().size(), 1u);
    EXPECT_EQ(p.templates()[0].tokens,
              (std::vector<std::string>{"send", "block", "<*>", "<*>"}));
}

TEST(Drain, DissimilarLinesGetDistinctTemplates) {
    DrainParser p(digits_config());
    EXPECT_EQ(p.parse_line("open file A"), 0);
    EXPECT_EQ(p.parse_line("close socket B"), 1);
    EXPECT_EQ(p.templates().size(), 2u);
}

TEST(Drain, EmptyLineRejected) {
    DrainParser p(digits_config());
    EXPECT_THROW(p.parse_line(""), DataError);
    EXPECT_THROW(p.parse_line("   \t  "), DataError);
}

TEST(Drain, MalformedUtf8NeverCrashes) {
    DrainParser p(digits_config());
    const std::string bad = "alpha \xff\xfe beta \x80 gamma";
    EXPECT_NO_THROW(p.parse_line(bad));
    EXPECT_EQ(p.parse_line(bad), 0);  // deterministic lossy replacement
}

TEST(Drain, DigitBearingTokensRouteThroughWildcardChild) {
    ParserConfig c;  // no masks: routing alone must cluster these
    DrainParser p(c);
    EXPECT_EQ(p.parse_line("abc42 x"), 0);
    EXPECT_EQ(p.parse_line("abc97 x"), 0);
    EXPECT_EQ(p.templates()[0].tokens, (std::vector<std::string>{"<*>", "x"}));
}

TEST(Drain, MaxChildrenOverflowSpillsIntoCatchAll) {
    ParserConfig c;
    c.max_children = 2;
    c.similarity_threshold = 0.9f;
    DrainParser p(c);
    std::vector<int> ids;
    for (int i = 0; i < 5; ++i)
        ids.push_back(p.parse_line(std::string(1, char('a' + i)) + "token first"));
    // all distinct templates despite the full node
    EXPECT_EQ(std::set<int>(ids.begin(), ids.end()).size(), 5u);
    // re-parsing finds each one again through the spill path
    for (int i = 0; i < 5; ++i)
        EXPECT_EQ(p.parse_line(std::string(1, char('a' + i)) + "token first"), ids[i]);
}

TEST(Drain, MatchingIsIdempotent) {
    DrainParser p(digits_config());
    const int t = p.parse_line("fetch chunk 17 done");
    EXPECT_EQ(p.parse_line("fetch chunk 17 done"), t);
    EXPECT_EQ(p.parse_line("fetch chunk 99 done"), t);
    const auto count = p.templates()[static_cast<std::size_t>(t)].match_count;
    EXPECT_EQ(p.parse_line("fetch chunk 99 done"), t);
    EXPECT_EQ(p.templates()[static_cast<std::size_t>(t)].match_count, count + 1);
}

TEST(Drain, MatchLineIsReadOnly) {
    DrainParser p(digits_config());
    p.parse_line("sync volume 3 start");
    const auto before = p.templates();
    EXPECT_EQ(p.match_line("sync volume 8 start").value_or(-1), 0);
    EXPECT_FALSE(p.match_line("totally different words here").has_value());
    EXPECT_EQ(p.templates().size(), before.size());
    EXPECT_EQ(p.templates()[0].match_count, before[0].match_count);
}

TEST(Drain, WildcardsAreMonotone) {
    ParserConfig c = digits_config();
    c.similarity_threshold = 0.4f;
    DrainParser p(c);
    p.parse_line("job stage alpha ok fine");
    std::vector<std::set<std::size_t>> history;
    auto wildcard_positions = [&]() {
        std::set<std::size_t> pos;
        const auto& toks = p.templates()[0].tokens;
        for (std::size_t i = 0; i < toks.size(); ++i)
            if (toks[i] == kWildcard) pos.insert(i);
        return pos;
    };
    auto prev = wildcard_positions();
    for (const char* line : {"job stage alpha ok bad", "job stage beta ok bad",
                             "job stage alpha no fine", "job stage gamma ok fine"}) {
        p.parse_line(line);
        auto cur = wildcard_positions();
        EXPECT_TRUE(std::includes(cur.begin(), cur.end(), prev.begin(), prev.end()));
        prev = cur;
    }
}

TEST(Drain, MaskSoundnessNoRawDigitsSurvive) {
    Rng rng(41);
    ParserConfig c;
    c.mask_patterns = mask_preset("synth");
    DrainParser p(c);
    for (int i = 0; i < 200; ++i) {
        const std::string line = "metric value " + std::to_string(rng.uniform_int(0, 1 << 20)) +
                                 " from 10.0." + std::to_string(rng.uniform_int(0, 255)) +
                                 ".1 at 0x" + std::to_string(rng.uniform_int(100, 999));
        p.parse_line(line);
    }
    for (const auto& t : p.templates())
        for (const auto& tok : t.tokens)
            for (char ch : tok) EXPECT_FALSE(ch >= '0' && ch <= '9') << tok;
}

TEST(Drain, MineCorpusRejectsEmptyCorpus) {
    EXPECT_THROW(mine_corpus({}, digits_config()), DataError);
    EXPECT_THROW(mine_corpus({"", "   "}, digits_config()), DataError);
}

TEST(Drain, MineCorpusSingleLine) {
    const auto r = mine_corpus({"hello world 1"}, digits_config());
    EXPECT_EQ(r.templates.size(), 1u);
    EXPECT_EQ(r.assignments, (std::vector<std::uint32_t>{0}));
    EXPECT_TRUE(r.issues.empty());
}

TEST(Drain, MineCorpusCollectsPerLineIssuesWithNumbers) {
    const auto r = mine_corpus({"good line 1", "", "also fine 2", "  "}, digits_config());
    EXPECT_EQ(r.assignments.size(), 2u);
    ASSERT_EQ(r.issues.size(), 2u);
    EXPECT_EQ(r.issues[0].line_number, 2u);
    EXPECT_EQ(r.issues[1].line_number, 4u);
}

TEST(Drain, MiningIsDeterministic) {
    Rng rng(4242);
    std::vector<std::string> lines;
    const std::vector<std::string> verbs = {"send", "recv", "open", "close", "flush"};
    const std::vector<std::string> nouns = {"block", "socket", "file", "pipe"};
    for (int i = 0; i < 500; ++i)
        lines.push_back(verbs[static_cast<std::size_t>(rng.uniform_int(0, 4))] + " " +
                        nouns[static_cast<std::size_t>(rng.uniform_int(0, 3))] + " " +
                        std::to_string(rng.uniform_int(0, 100000)));
    const auto a = mine_corpus(lines, digits_config());
    const auto b = mine_corpus(lines, digits_config());
    EXPECT_EQ(a.assignments, b.assignments);
    ASSERT_EQ(a.templates.size(), b.templates.size());
    for (std::size_t i = 0; i < a.templates.size(); ++i) {
        EXPECT_EQ(a.templates[i].tokens, b.templates[i].tokens);
        EXPECT_EQ(a.templates[i].match_count, b.templates[i].match_count);
    }
}

TEST(Drain, RecoversGeneratingPatternsExactly) {
    // ten fixed patterns with random numeric parameters; the generator's own
    // pattern index is the oracle for the mined assignment
    Rng rng(20261);
    const std::vector<std::string> heads = {
        "receiving block <n> src dest",
        "deleted block <n> of size <n>",
        "verification succeeded for blk_<n>",
        "served block <n> to 10.0.<n>.2",
        "writer thread <n> exiting now ok",
        "allocate new block slot <n>",
        "replica monitor tick <n> idle",
        "namenode heartbeat from rack <n> port <n>",
        "exception writing block <n> retry scheduled",
        "packet responder <n> terminating early state <n>"};
    std::vector<std::string> lines;
    std::vector<int> truth;
    for (int i = 0; i < 1000; ++i) {
        const auto pi = static_cast<std::size_t>(rng.uniform_int(0, 9));
        std::string line = heads[pi];
        std::size_t pos;
        while ((pos = line.find("<n>")) != std::string::npos)
            line.replace(pos, 3, std::to_string(rng.uniform_int(0, 1 << 20)));
        lines.push_back(line);
        truth.push_back(static_cast<int>(pi));
    }
    ParserConfig c;
    c.mask_patterns = mask_preset("synth");
    const auto r = mine_corpus(lines, c);
    EXPECT_EQ(r.templates.size(), 10u);
    // assignment <-> pattern must be a bijection
    std::map<int, std::uint32_t> pattern_to_template;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        const auto [it, inserted] =
            pattern_to_template.emplace(truth[i], r.assignments[i]);
        EXPECT_EQ(it->second, r.assignments[i]);
    }
    EXPECT_EQ(pattern_to_template.size(), 10u);
}

TEST(Drain, LineFormatSplitsPrefixColumns) {
    const LineFormat f = LineFormat::parse("label content");
    const auto fields = f.split("- send block 5");
    EXPECT_EQ(fields.label, "-");
    EXPECT_EQ(fields.content, "send block 5");
    const auto tagged = f.split("io_timeout disk stalled on bay 7");
    EXPECT_EQ(tagged.label, "io_timeout");

    const LineFormat full = LineFormat::parse("label timestamp content");
    const auto g = full.split("- 1117838570 core dumped");
    EXPECT_EQ(g.timestamp, "1117838570");
    EXPECT_EQ(g.content, "core dumped");

    EXPECT_THROW(LineFormat::parse("label"), ConfigError);
    EXPECT_THROW(LineFormat::parse("content label"), ConfigError);
    EXPECT_THROW(LineFormat::parse("bogus content"), ConfigError);
}

TEST(Drain, ConfigValidation) {
    ParserConfig c;
    c.tree_depth = 2;
    EXPECT_THROW(DrainParser{c}, ConfigError);
    c = ParserConfig{};
    c.similarity_threshold = 0.0f;
    EXPECT_THROW(DrainParser{c}, ConfigError);
    c = ParserConfig{};
    c.similarity_threshold = 1.5f;
    EXPECT_THROW(DrainParser{c}, ConfigError);
    c = ParserConfig{};
    c.mask_patterns = {"(unclosed"};
    EXPECT_THROW(DrainParser{c}, ConfigError);
    EXPECT_THROW(mask_preset("nope"), ConfigError);
}

TEST(Drain, TemplatesJsonRoundTrip) {
    const auto r = mine_corpus({"alpha beta 1", "alpha beta 2", "gamma delta 3"},
                               digits_config());
    const std::string path = temp_path("translog_templates_test.json");
    write_templates_json(path, r.templates);
    const auto back = read_templates_json(path);
    ASSERT_EQ(back.size(), r.templates.size());
    for (std::size_t i = 0; i < back.size(); ++i) {
        EXPECT_EQ(back[i].id, r.templates[i].id);
        EXPECT_EQ(back[i].tokens, r.templates[i].tokens);
        EXPECT_EQ(back[i].match_count, r.templates[i].match_count);
    }
    std::filesystem::remove(path);
}

TEST(Drain, AssignmentsBinaryRoundTripAndErrors) {
    const std::vector<std::uint32_t> in = {0, 3, 1, 1, 2, 0, 7};
    const std::string path = temp_path("translog_assignments_test.bin");
    write_assignments(path, in);
    EXPECT_EQ(read_assignments(path), in);

    // truncate the payload
    std::filesystem::resize_file(path, 8 + 4 + 3 * 4 + 2);
    EXPECT_THROW(read_assignments(path), DataError);

    // corrupt magic
    {
        std::ofstream os(path, std::ios::binary | std::ios::trunc);
        os << "NOTMAGIC";
    }
    EXPECT_THROW(read_assignments(path), DataError);
    std::filesystem::remove(path);
}
