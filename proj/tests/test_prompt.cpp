#include <catch2/catch_amalgamated.hpp>

#include <string>
#include <vector>

#include "mrg/prompt.hpp"
#include "mrg/rng.hpp"
#include "mrg/vocab.hpp"

using namespace mrg;

namespace {

struct Fixture {
    EntityVocabulary evocab;
    ExplicitGraph graph;
    TokenVocab tvocab;
    Tensor table;
    Tensor v_e, e_e, s_e;
    int k = 0, scans = 0, d_w = 0;

    Fixture(int regions, int lesions, int n_scans, int width, uint64_t seed) {
        std::tie(evocab, graph) = default_entity_graph(regions, lesions);
        tvocab = build_token_vocab(evocab);
        k = evocab.k();
        scans = n_scans;
        d_w = width;
        Rng rng(seed);
        table = Tensor::randn(tvocab.size(), d_w, rng, 1.0, true);
        v_e = Tensor::randn(scans, d_w, rng);
        e_e = Tensor::randn(k, d_w, rng);
        s_e = Tensor::randn(k, d_w, rng);
    }

    MultiModalPrompt build(Tape& tape, const PromptToggles& t,
                           const std::vector<std::string>& cats = {},
                           const std::string& instruction = kDefaultInstruction) {
        return assemble_prompt(tape, v_e, e_e, s_e, cats, evocab, tvocab, table, instruction, t);
    }
};

// Independent layout oracle: enumerate the expected (kind, source, entity,
// token) tuples straight from the template description.
struct ExpectedRow {
    SegmentKind kind;
    EmbedSource source;
    int entity;
    std::string token;  // empty when not a vocabulary token
};

std::vector<ExpectedRow> expected_layout(const Fixture& f, const PromptToggles& t,
                                         const std::vector<std::string>& cats,
                                         const std::string& instruction) {
    std::vector<ExpectedRow> rows;
    rows.push_back({SegmentKind::special_token, EmbedSource::vocab_table, -1, "[Img]"});
    for (int s = 0; s < f.scans; ++s)
        rows.push_back({SegmentKind::scan, EmbedSource::adaptor, -1, ""});
    rows.push_back({SegmentKind::special_token, EmbedSource::vocab_table, -1, "[/Img]"});
    if (t.entity_embed)
        for (int i = 1; i <= f.k; ++i) {
            rows.push_back(
                {SegmentKind::special_token, EmbedSource::vocab_table, i, f.evocab.at(i).name});
            rows.push_back({SegmentKind::entity_embed, EmbedSource::kja, i, ""});
            if (t.status_embed) {
                rows.push_back({SegmentKind::special_token, EmbedSource::vocab_table, i, "status:"});
                rows.push_back({SegmentKind::status_embed, EmbedSource::status, i, ""});
            }
            if (t.category_words)
                for (const auto& tok : category_word_tokens(cats[static_cast<size_t>(i - 1)]))
                    rows.push_back({SegmentKind::special_token, EmbedSource::vocab_table, i, tok});
        }
    rows.push_back({SegmentKind::special_token, EmbedSource::vocab_table, -1, "[MRG]"});
    for (const auto& w : split_words(instruction))
        rows.push_back({SegmentKind::instruction_token, EmbedSource::vocab_table, -1, w});
    return rows;
}

void check_layout(const Fixture& f, const MultiModalPrompt& got,
                  const std::vector<ExpectedRow>& want) {
    REQUIRE(got.positions.size() == want.size());
    REQUIRE(got.length() == static_cast<int>(want.size()));
    REQUIRE(got.embeddings.cols() == f.d_w);
    for (size_t i = 0; i < want.size(); ++i) {
        INFO("row " << i);
        CHECK(got.positions[i].kind == want[i].kind);
        CHECK(got.positions[i].source == want[i].source);
        CHECK(got.positions[i].entity_index == want[i].entity);
        if (want[i].token.empty()) {
            CHECK(got.positions[i].token_id == -1);
        } else {
            REQUIRE(got.positions[i].token_id >= 0);
            CHECK(f.tvocab.token(got.positions[i].token_id) == want[i].token);
        }
    }
}

} // namespace

TEST_CASE("prompt layout matches the template oracle for every toggle combination") {
    Fixture f(2, 2, 3, 8, 123);
    struct Case {
        PromptToggles t;
        std::vector<std::string> cats;
    };
    std::vector<Case> cases = {
        {{true, true, false}, {}},
        {{true, false, false}, {}},
        {{false, false, false}, {}},
        {{true, true, true}, {"exist", "not exist", "exist", "exist"}},
        {{true, false, true}, {"not exist", "not exist", "exist", "not exist"}},
    };
    for (const auto& c : cases) {
        Tape tape;
        MultiModalPrompt got = f.build(tape, c.t, c.cats);
        check_layout(f, got, expected_layout(f, c.t, c.cats, kDefaultInstruction));
    }
}

TEST_CASE("prompt embedding rows carry the right vectors") {
    Fixture f(2, 1, 2, 6, 321);
    PromptToggles t{true, true, false};
    Tape tape;
    MultiModalPrompt p = f.build(tape, t);

    // Row 0 is the image-open token embedding.
    const int img_open = f.tvocab.img_open_id();
    for (int c = 0; c < f.d_w; ++c) CHECK(p.embeddings(0, c) == f.table(img_open, c));
    // Rows 1..scans are the adapted scan embeddings in order.
    for (int s = 0; s < f.scans; ++s)
        for (int c = 0; c < f.d_w; ++c) CHECK(p.embeddings(1 + s, c) == f.v_e(s, c));
    // First entity block starts after [Img] scans [/Img].
    const int base = 1 + f.scans + 1;
    const int name_id = f.tvocab.id(f.evocab.at(1).name);
    for (int c = 0; c < f.d_w; ++c) {
        CHECK(p.embeddings(base, c) == f.table(name_id, c));
        CHECK(p.embeddings(base + 1, c) == f.e_e(0, c));
        CHECK(p.embeddings(base + 2, c) == f.table(f.tvocab.status_marker_id(), c));
        CHECK(p.embeddings(base + 3, c) == f.s_e(0, c));
    }
    // Final rows: [MRG] then the instruction tokens.
    const auto words = split_words(kDefaultInstruction);
    const int mrg_row = p.length() - 1 - static_cast<int>(words.size());
    for (int c = 0; c < f.d_w; ++c)
        CHECK(p.embeddings(mrg_row, c) == f.table(f.tvocab.task_id(), c));
    for (size_t w = 0; w < words.size(); ++w) {
        const int id = f.tvocab.id(words[w]);
        for (int c = 0; c < f.d_w; ++c)
            CHECK(p.embeddings(mrg_row + 1 + static_cast<int>(w), c) == f.table(id, c));
    }
}

TEST_CASE("dependent toggles are rejected without their prerequisite") {
    Fixture f(2, 2, 2, 4, 9);
    Tape tape;
    CHECK_THROWS_AS(f.build(tape, {false, true, false}), Error);
    CHECK_THROWS_AS(f.build(tape, {false, false, true}), Error);
}

TEST_CASE("prompt shape validation catches mismatched inputs") {
    Fixture f(2, 2, 2, 4, 10);
    Tape tape;
    Rng rng(11);
    Tensor bad_e = Tensor::randn(f.k + 1, f.d_w, rng);
    CHECK_THROWS_AS(assemble_prompt(tape, f.v_e, bad_e, f.s_e, {}, f.evocab, f.tvocab, f.table,
                                    kDefaultInstruction, {true, false, false}),
                    ShapeError);
    Tensor bad_v = Tensor::randn(2, f.d_w + 1, rng);
    CHECK_THROWS_AS(assemble_prompt(tape, bad_v, f.e_e, f.s_e, {}, f.evocab, f.tvocab, f.table,
                                    kDefaultInstruction, {true, false, false}),
                    ShapeError);
    // Category words require exactly one word per entity.
    CHECK_THROWS_AS(f.build(tape, {true, true, true}, {"exist"}), ShapeError);
}

TEST_CASE("category words threshold at one half inclusively") {
    CHECK(category_words({0.0, 0.4999, 0.5, 0.5001, 1.0}) ==
          std::vector<std::string>{"not exist", "not exist", "exist", "exist", "exist"});
    CHECK(category_word_tokens("exist") == std::vector<std::string>{"exist"});
    CHECK(category_word_tokens("not exist") == std::vector<std::string>{"not", "exist"});
    CHECK_THROWS_AS(category_word_tokens("maybe"), Error);
}

TEST_CASE("negated category words occupy two prompt rows") {
    Fixture f(1, 1, 1, 4, 77);
    PromptToggles with_cat{true, false, true};
    PromptToggles without{true, false, false};
    Tape tape;
    MultiModalPrompt neg = f.build(tape, with_cat, {"not exist", "not exist"});
    MultiModalPrompt pos = f.build(tape, with_cat, {"exist", "exist"});
    MultiModalPrompt none = f.build(tape, without);
    CHECK(neg.length() == none.length() + 2 * f.k);
    CHECK(pos.length() == none.length() + 1 * f.k);
}

TEST_CASE("instruction text is tokenized word by word") {
    Fixture f(1, 1, 1, 4, 88);
    Tape tape;
    MultiModalPrompt p = f.build(tape, {false, false, false}, {}, "describe findings .");
    const int n = p.length();
    CHECK(f.tvocab.token(p.positions[static_cast<size_t>(n - 3)].token_id) == "describe");
    CHECK(f.tvocab.token(p.positions[static_cast<size_t>(n - 2)].token_id) == "findings");
    CHECK(f.tvocab.token(p.positions[static_cast<size_t>(n - 1)].token_id) == ".");
    CHECK(p.positions[static_cast<size_t>(n - 4)].token_id == f.tvocab.task_id());
}

TEST_CASE("the scan adaptor maps flattened patches into word space") {
    Rng rng(55);
    const int patches = 3, d_s = 4, d_w = 6, n = 2;
    AdaptorParams p = AdaptorParams::init(patches, d_s, d_w, rng);
    Tensor flat = Tensor::randn(n, patches * d_s, rng);
    Tape tape;
    Tensor out = adapt_scans(tape, flat, p);
    REQUIRE(out.rows() == n);
    REQUIRE(out.cols() == d_w);
    CHECK_THROWS_AS(adapt_scans(tape, Tensor::randn(n, patches * d_s + 1, rng), p), ShapeError);
}

TEST_CASE("prompt gradients reach the entity embeddings but spare constants") {
    Fixture f(1, 1, 2, 4, 99);
    Rng rng(5);
    Tensor e_e_leaf = Tensor::randn(f.k, f.d_w, rng, 1.0, true);
    Tape tape;
    MultiModalPrompt p = assemble_prompt(tape, f.v_e, e_e_leaf, f.s_e, {}, f.evocab, f.tvocab,
                                         f.table, kDefaultInstruction, {true, false, false});
    tape.backward(sum_all(tape, mul(tape, p.embeddings, p.embeddings)));
    REQUIRE(e_e_leaf.has_grad());
    double total = 0.0;
    for (double g : e_e_leaf.grad()) total += std::abs(g);
    CHECK(total > 0.0);
}

TEST_CASE("layout text names every row") {
    Fixture f(1, 1, 1, 4, 101);
    Tape tape;
    MultiModalPrompt p = f.build(tape, {true, true, false});
    std::string text = prompt_layout_text(p, f.tvocab);
    CHECK(text.find("scan adaptor") != std::string::npos);
    CHECK(text.find("entity_embed kja") != std::string::npos);
    CHECK(text.find("status_embed status") != std::string::npos);
    CHECK(text.find("token=[MRG]") != std::string::npos);
    // One line per position.
    size_t lines = 0;
    for (char c : text)
        if (c == '\n') ++lines;
    CHECK(lines == p.positions.size());
}
