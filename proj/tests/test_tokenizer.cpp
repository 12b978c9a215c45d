#include "countlab/tokenizer.hpp"

#include <gtest/gtest.h>

#include <algorithm>

#include "countlab/rng.hpp"
#include "countlab/tasks.hpp"

namespace countlab {
namespace {

class TokenizerTest : public ::testing::Test {
protected:
    Vocab vocab = default_vocab();
};

TEST_F(TokenizerTest, SpecExampleSegments) {
    TokenSeq s = encode("apple, apple | apple", vocab);
    ASSERT_EQ(s.length(), 6);
    EXPECT_EQ(vocab.class_of(s.ids[0]), TokenClass::Bos);
    EXPECT_EQ(vocab.text_of(s.ids[1]), "apple");
    EXPECT_EQ(vocab.text_of(s.ids[2]), ",");
    EXPECT_EQ(vocab.text_of(s.ids[3]), "apple");
    EXPECT_EQ(vocab.text_of(s.ids[4]), "|");
    EXPECT_EQ(vocab.text_of(s.ids[5]), "apple");
    EXPECT_EQ(s.segment_ids, (std::vector<int>{0, 0, 0, 0, 0, 1}));
}

TEST_F(TokenizerTest, EmptyStringIsBosOnly) {
    TokenSeq s = encode("", vocab);
    ASSERT_EQ(s.length(), 1);
    EXPECT_EQ(s.ids[0], vocab.bos_id());
}

TEST_F(TokenizerTest, UnknownWordNamesTheWord) {
    try {
        encode("apple, banana", vocab);
        FAIL() << "expected VocabError";
    } catch (const VocabError& e) {
        EXPECT_NE(std::string(e.what()).find("banana"), std::string::npos);
    }
}

TEST_F(TokenizerTest, DecodeSingleItem) {
    TokenSeq s;
    s.push(vocab.bos_id(), false);
    s.push(vocab.id_of("apple"), false);
    EXPECT_EQ(decode(s, vocab), "apple");
}

TEST_F(TokenizerTest, DecodeThreePartitionSpacing) {
    TokenSeq s = encode("apple, apple | apple | apple, apple", vocab);
    EXPECT_EQ(decode(s, vocab), "apple, apple | apple | apple, apple");
}

TEST_F(TokenizerTest, ColonCarriesWhitespaceToken) {
    TokenSeq s = encode("part 2: 4", vocab);
    ASSERT_EQ(s.length(), 6);  // BOS part 2 : <ws> 4
    EXPECT_EQ(vocab.class_of(s.ids[3]), TokenClass::Colon);
    EXPECT_EQ(vocab.class_of(s.ids[4]), TokenClass::Whitespace);
    EXPECT_EQ(vocab.value_of(s.ids[5]), 4);
    EXPECT_EQ(decode(s, vocab), "part 2: 4");
}

TEST_F(TokenizerTest, InvalidIdThrowsRangeError) {
    TokenSeq s;
    s.push(vocab.bos_id(), false);
    s.push(vocab.size() + 5, false);
    EXPECT_THROW(decode(s, vocab), RangeError);
}

TEST_F(TokenizerTest, TemplatesEncodeAndRoundTrip) {
    for (std::string_view tpl :
         {prompts::kUnstructuredNoSteps, prompts::kUnstructuredSteps, prompts::kStructuredNoSteps,
          prompts::kStructuredSteps, prompts::kCountScopeBlank}) {
        TokenSeq s = encode(tpl, vocab);
        EXPECT_EQ(decode(s, vocab), tpl);
        EXPECT_EQ(encode(decode(s, vocab), vocab), s);
    }
}

TEST_F(TokenizerTest, RoundTripOnGeneratedContexts) {
    Rng rng(42);
    for (int trial = 0; trial < 100; ++trial) {
        const std::string item(prompts::kItems[trial % prompts::kItems.size()]);
        const int total = 5 + static_cast<int>(rand_below(rng, 60));
        CountingTask task = (trial % 2 == 0) ? gen_structured(item, total, 3, 9, rng, trial)
                                             : gen_unstructured(item, total, trial);
        task.steps = (trial % 4 < 2) ? Steps::WithSteps : Steps::NoSteps;
        const std::string text = render_prompt(task) + " " + render_answer(task);
        TokenSeq s = encode(text, vocab);
        EXPECT_EQ(decode(s, vocab), text);
        EXPECT_EQ(encode(decode(s, vocab), vocab), s);
    }
}

TEST_F(TokenizerTest, SegmentCountEqualsSeparatorsPlusOne) {
    Rng rng(9);
    for (int trial = 0; trial < 50; ++trial) {
        CountingTask task = gen_structured("dog", 30 + trial, 3, 7, rng, trial);
        TokenSeq s = encode(render_prompt(task), vocab);
        int seps = 0;
        for (int id : s.ids) {
            if (vocab.is(id, TokenClass::Separator)) ++seps;
        }
        int distinct = 1 + *std::max_element(s.segment_ids.begin(), s.segment_ids.end());
        EXPECT_EQ(distinct, seps + 1);
        // Non-decreasing, stepping only right after a separator.
        for (int p = 1; p < s.length(); ++p) {
            const int d = s.segment_ids[p] - s.segment_ids[p - 1];
            EXPECT_TRUE(d == 0 || d == 1);
            if (d == 1) {
                EXPECT_TRUE(vocab.is(s.ids[p - 1], TokenClass::Separator));
            }
        }
    }
}

TEST_F(TokenizerTest, ItemCountsPerSegmentMatchGroundTruth) {
    Rng rng(1234);
    for (int trial = 0; trial < 50; ++trial) {
        CountingTask task = gen_structured("cat", 20 + trial, 2, 8, rng, trial);
        TokenSeq s = encode(render_prompt(task), vocab);
        std::vector<int> counts(task.partition_sizes.size(), 0);
        for (int p = 0; p < s.length(); ++p) {
            if (vocab.is(s.ids[p], TokenClass::Item)) {
                counts[static_cast<size_t>(s.segment_ids[p])]++;
            }
        }
        EXPECT_EQ(counts, task.partition_sizes);
    }
}

TEST_F(TokenizerTest, VocabJsonRoundTrip) {
    nlohmann::json j = vocab.to_json();
    Vocab back = Vocab::from_json(j);
    EXPECT_EQ(back.size(), vocab.size());
    EXPECT_EQ(back.bos_id(), vocab.bos_id());
    EXPECT_EQ(back.number_id(37), vocab.number_id(37));
    TokenSeq a = encode("apple, apple | apple", vocab);
    TokenSeq b = encode("apple, apple | apple", back);
    EXPECT_EQ(a, b);
}

TEST_F(TokenizerTest, VocabInvariants) {
    EXPECT_THROW(Vocab({{"a", TokenClass::Keyword, {}}, {"a", TokenClass::Keyword, {}}}),
                 VocabError);
    EXPECT_THROW(Vocab({{"a", TokenClass::Keyword, {}}}), VocabError);  // no BOS
    EXPECT_THROW(Vocab({{"<bos>", TokenClass::Bos, {}}, {"3", TokenClass::Number, {}}}),
                 VocabError);  // number without value
}

}  // namespace
}  // namespace countlab
