#include "recoseg/templates.hpp"
#include "recoseg/tokenizer.hpp"
#include "recoseg/weights.hpp"

#include "support.hpp"

#include <doctest.h>

#include <fstream>

using namespace recoseg;

namespace {

const BpeTokenizer& tokenizer() {
    static const BpeTokenizer t(default_vocab_path());
    return t;
}

}  // namespace

TEST_CASE("token ids match the reference tokenizer on the fixture strings") {
    const auto expected = testing::tiny_expected();
    const auto& strings = expected["strings"];
    const auto& ids = expected["token_ids"];
    REQUIRE(strings.size() == ids.size());
    for (size_t i = 0; i < strings.size(); ++i) {
        const auto s = strings[i].get<std::string>();
        CHECK_MESSAGE(tokenizer().tokenize(s, 77) == ids[i].get<std::vector<int>>(), s);
    }
}

TEST_CASE("further reference strings") {
    // Ids recorded from the reference tokenizer.
    const std::vector<std::pair<std::string, std::vector<int>>> cases{
        {"A &amp; B", {49406, 320, 261, 321, 49407}},
        {"hello,world", {49406, 3306, 267, 1002, 49407}},
        {"xxxxx", {49406, 44195, 49407}},
        {"\xC3\x80\xC3\x89\xC3\x8E lower", {49406, 36149, 3459, 127, 362, 4909, 49407}},
        {"don't STOP", {49406, 847, 713, 1691, 49407}},
        {"3.14159", {49406, 274, 269, 272, 275, 272, 276, 280, 49407}},
        {"  ", {49406, 49407}},
    };
    for (const auto& [text, ids] : cases) CHECK_MESSAGE(tokenizer().tokenize(text, 77) == ids, text);
}

TEST_CASE("special tokens and vocabulary size") {
    CHECK(tokenizer().start_token() == 49406);
    CHECK(tokenizer().end_token() == 49407);
    CHECK(tokenizer().vocab_size() == 49408);
}

TEST_CASE("overlong text is an error, not a silent truncation") {
    std::string longer;
    for (int i = 0; i < 80; ++i) longer += "dog ";
    CHECK_THROWS_AS(tokenizer().tokenize(longer, 77), DataError);
    CHECK(tokenizer().tokenize("dog dog", 4).size() == 4);
    CHECK_THROWS_AS(tokenizer().tokenize("dog dog dog", 4), DataError);
}

TEST_CASE("text cleaning") {
    CHECK(clean_text("A &amp;amp; B\n\tC") == "a & b c");
    CHECK(clean_text("  Multiple   Spaces\tHere ") == "multiple spaces here");
    CHECK(clean_text("\xC3\x89T\xC3\x89") == "\xC3\xA9t\xC3\xA9");
}

TEST_CASE("word splitting") {
    CHECK(split_words("it's a dog's 3rd toy!!") ==
          std::vector<std::string>{"it", "'s", "a", "dog", "'s", "3", "rd", "toy", "!!"});
    CHECK(split_words("we'll see") == std::vector<std::string>{"we", "'ll", "see"});
    CHECK(split_words("2024") == std::vector<std::string>{"2", "0", "2", "4"});
}

TEST_CASE("templates") {
    CHECK(default_templates().size() == 80);
    for (const auto& t : default_templates()) CHECK(t.find("{}") != std::string::npos);
    CHECK(fill_template("a photo of a {}.", "dog") == "a photo of a dog.");

    const auto dir = testing::scratch_dir("templates");
    std::ofstream(dir / "t.txt") << "a {} here\n\nthe {}\n";
    CHECK(load_templates(dir / "t.txt") == std::vector<std::string>{"a {} here", "the {}"});
    std::ofstream(dir / "bad.txt") << "no placeholder\n";
    CHECK_THROWS_AS(load_templates(dir / "bad.txt"), DataError);
}
