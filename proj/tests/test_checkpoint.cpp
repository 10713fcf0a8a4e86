#include <doctest.h>

#include <cstdio>
#include <fstream>

#include "hebbseed/checkpoint.hpp"
#include "hebbseed/error.hpp"

using namespace hebbseed;

TEST_CASE("checkpoint round-trips bit-exactly") {
    NetworkSpec spec = standard_network_spec({3, 16, 16}, 4, 0.1, true, true);
    Rng rng(61);
    Network net = Network::build(spec, rng);
    // scribble distinctive values into every tensor, including running stats
    double v = 0.123456789;
    for (ParamRef& p : net.params())
        for (std::size_t i = 0; i < p.tensor->size(); ++i) {
            (*p.tensor)[i] = v;
            v = v * 1.0000001 + 1e-9;
        }

    const std::string path = "ckpt_test.bin";
    save_checkpoint(net, path);
    Network back = load_checkpoint(path);

    CHECK(back.spec.to_text() == net.spec.to_text());
    std::vector<ParamRef> a = net.params(), b = back.params();
    REQUIRE(a.size() == b.size());
    for (std::size_t p = 0; p < a.size(); ++p) {
        CHECK(a[p].name == b[p].name);
        REQUIRE(a[p].tensor->size() == b[p].tensor->size());
        for (std::size_t i = 0; i < a[p].tensor->size(); ++i)
            CHECK((*a[p].tensor)[i] == (*b[p].tensor)[i]); // bitwise
    }

    // a second save of the loaded network is byte-identical
    const std::string path2 = "ckpt_test2.bin";
    save_checkpoint(back, path2);
    std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
    std::string s1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    std::string s2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    CHECK(s1 == s2);
    std::remove(path.c_str());
    std::remove(path2.c_str());
}

TEST_CASE("checkpoint rejects garbage and truncation") {
    const std::string path = "ckpt_bad.bin";
    {
        std::ofstream os(path, std::ios::binary);
        os << "not a checkpoint at all";
    }
    CHECK_THROWS_AS(load_checkpoint(path), FormatError);

    NetworkSpec spec = standard_network_spec({3, 16, 16}, 4, 0.1, true, false);
    Rng rng(62);
    Network net = Network::build(spec, rng);
    save_checkpoint(net, path);
    // truncate
    {
        std::ifstream is(path, std::ios::binary);
        std::string all((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
        std::ofstream os(path, std::ios::binary);
        os.write(all.data(), static_cast<std::streamsize>(all.size() / 2));
    }
    CHECK_THROWS_AS(load_checkpoint(path), FormatError);
    std::remove(path.c_str());
}
