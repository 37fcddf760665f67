#include "doctest.h"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "bkst/data_store.hpp"

using namespace bkst;

namespace {

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / ("bkst_test_" + name)).string();
}

}  // namespace

TEST_CASE("generation") {
    const auto fam = CoefficientFamily::gamma(0.5, 5.0);
    const auto a = generate(fam, 8, 21, 12, 77);
    CHECK(a.size() == 8);
    CHECK(a == generate(fam, 8, 21, 12, 77));
    CHECK(a == generate(fam, 8, 21, 12, 77, false));
    CHECK_FALSE(a == generate(fam, 8, 21, 12, 78));
    CHECK_NOTHROW(a.validate());
    CHECK(a.samples[0].lambda.size() == 21);
    CHECK(a.samples[0].k1.size() == TriangularGrid(12).size());
    CHECK(a.coefficients(3).q == a.samples[3].q);
    CHECK_THROWS_AS(generate(fam, 0, 21, 12, 1), InvalidArgument);
    CHECK_THROWS_AS(generate(fam, 2, 21, 1, 1), InvalidArgument);

    // Sample k depends only on (seed, k).
    const auto wide = generate(fam, 12, 21, 12, 77);
    for (std::size_t k = 0; k < 8; ++k) CHECK(wide.samples[k] == a.samples[k]);
}

TEST_CASE("validation catches a broken boundary identity") {
    auto d = generate(CoefficientFamily::gamma(0.5, 5.0), 2, 21, 10, 1);
    d.samples[1].k1[TriangularGrid::index(4, 4)] += 1e-9;
    CHECK_THROWS_WITH(d.validate(), doctest::Contains("sample 1"));
    d = generate(CoefficientFamily::gamma(0.5, 5.0), 2, 21, 10, 1);
    d.samples[0].mu.pop_back();
    CHECK_THROWS_AS(d.validate(), InvalidArgument);
}

TEST_CASE("file format") {
    const auto d = generate(CoefficientFamily::random_smooth(0.5, 5.0, 0.5), 5, 11, 8, 3);
    const auto path = temp_path("data.hkds");
    write_dataset(d, path);
    CHECK(std::filesystem::file_size(path) == dataset_file_size(5, 11, 8));
    CHECK(dataset_file_size(5, 11, 8) == 20 + 5 * 8 * (1 + 55 + 2 * 45));
    CHECK(read_dataset(path) == d);

    SUBCASE("bad magic") {
        std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
        f.put('Z');
        f.close();
        CHECK_THROWS_WITH(read_dataset(path), doctest::Contains("magic"));
    }
    SUBCASE("bad version") {
        std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(4);
        f.put(static_cast<char>(2));
        f.close();
        CHECK_THROWS_WITH(read_dataset(path), doctest::Contains("version"));
    }
    SUBCASE("truncation names the record") {
        const std::uint64_t record = 8 * (1 + 55 + 2 * 45);
        std::filesystem::resize_file(path, 20 + 3 * record + 17);
        CHECK_THROWS_WITH(read_dataset(path), doctest::Contains("record 3 of 5"));
    }
    SUBCASE("trailing bytes") {
        std::ofstream(path, std::ios::app | std::ios::binary).put('x');
        CHECK_THROWS_WITH(read_dataset(path), doctest::Contains("trailing"));
    }
    std::remove(path.c_str());
    CHECK_THROWS(read_dataset(path));
}

TEST_CASE("little-endian header layout") {
    const auto d = generate(CoefficientFamily::gamma(1.0, 2.0), 1, 3, 2, 0);
    const auto path = temp_path("hdr.hkds");
    write_dataset(d, path);
    std::ifstream is(path, std::ios::binary);
    unsigned char hdr[20];
    is.read(reinterpret_cast<char*>(hdr), 20);
    CHECK(std::string(reinterpret_cast<char*>(hdr), 4) == "HKDS");
    CHECK(hdr[4] == 1);
    CHECK(hdr[8] == 1);
    CHECK(hdr[12] == 3);
    CHECK(hdr[16] == 2);
    is.close();
    std::remove(path.c_str());
}
