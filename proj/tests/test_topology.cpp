#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "specwin/errors.hpp"
#include "specwin/topology.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include <unistd.h>

using namespace specwin;
namespace fs = std::filesystem;

namespace {

// Builds a fake /sys tree: one thread_siblings_list file per cpu.
struct SysrootFixture {
    fs::path root;

    SysrootFixture() {
        root = fs::temp_directory_path() /
               ("specwin-topo-" + std::to_string(::getpid()) + "-" +
                std::to_string(counter()++));
        fs::create_directories(root);
    }
    ~SysrootFixture() { fs::remove_all(root); }

    static int& counter() {
        static int n = 0;
        return n;
    }

    void add_cpu(int cpu, const std::string& siblings_list) {
        const fs::path dir =
            root / "sys/devices/system/cpu" / ("cpu" + std::to_string(cpu)) / "topology";
        fs::create_directories(dir);
        std::ofstream(dir / "thread_siblings_list") << siblings_list << "\n";
    }

    void add_offline_cpu(int cpu) {
        // present as a directory but without a populated topology dir,
        // which is how an offlined cpu appears
        fs::create_directories(root / "sys/devices/system/cpu" /
                               ("cpu" + std::to_string(cpu)));
    }
};

} // namespace

TEST_CASE("cpu list parsing accepts the kernel's syntaxes") {
    CHECK(parse_cpu_list("0") == std::vector<int>{0});
    CHECK(parse_cpu_list("0,4") == std::vector<int>{0, 4});
    CHECK(parse_cpu_list("4,0") == std::vector<int>{0, 4}); // sorted
    CHECK(parse_cpu_list("0-3") == std::vector<int>{0, 1, 2, 3});
    CHECK(parse_cpu_list("1,8-10") == std::vector<int>{1, 8, 9, 10});
    CHECK(parse_cpu_list("2,2,2") == std::vector<int>{2}); // deduplicated
    CHECK(parse_cpu_list("0,4\n") == std::vector<int>{0, 4}); // trailing newline
}

TEST_CASE("cpu list parsing rejects malformed input") {
    CHECK_THROWS_AS(parse_cpu_list(""), TopologyUnavailable);
    CHECK_THROWS_AS(parse_cpu_list("a"), TopologyUnavailable);
    CHECK_THROWS_AS(parse_cpu_list("1,"), TopologyUnavailable);
    CHECK_THROWS_AS(parse_cpu_list("3-1"), TopologyUnavailable);
    CHECK_THROWS_AS(parse_cpu_list("-1"), TopologyUnavailable);
    CHECK_THROWS_AS(parse_cpu_list("1..3"), TopologyUnavailable);
}

TEST_CASE("two-way SMT pairs form cores named by their smallest member") {
    SysrootFixture fx;
    // classic layout: 0/4, 1/5, 2/6, 3/7 share cores
    for (int c = 0; c < 4; ++c) {
        const std::string list = std::to_string(c) + "," + std::to_string(c + 4);
        fx.add_cpu(c, list);
        fx.add_cpu(c + 4, list);
    }
    const CpuTopology topo = detect_topology(fx.root);

    CHECK(topo.logical_ids == std::vector<int>{0, 1, 2, 3, 4, 5, 6, 7});
    CHECK(topo.smt_enabled);
    REQUIRE(topo.cores.size() == 4);
    CHECK(topo.cores.at(0) == std::vector<int>{0, 4});
    CHECK(topo.cores.at(3) == std::vector<int>{3, 7});
    CHECK(topo.core_of(5) == 1);
    CHECK(topo.sibling_of(2) == 6);
    CHECK(topo.sibling_of(6) == 2); // symmetric
    CHECK(topo.contains(7));
    CHECK_FALSE(topo.contains(8));
    CHECK_THROWS_AS(topo.core_of(11), InvalidCpu);
}

TEST_CASE("adjacent-sibling layout parses via ranges") {
    SysrootFixture fx;
    fx.add_cpu(0, "0-1");
    fx.add_cpu(1, "0-1");
    fx.add_cpu(2, "2-3");
    fx.add_cpu(3, "2-3");
    const CpuTopology topo = detect_topology(fx.root);
    CHECK(topo.smt_enabled);
    CHECK(topo.sibling_of(0) == 1);
    CHECK(topo.sibling_of(3) == 2);
    CHECK(topo.cores.at(2) == std::vector<int>{2, 3});
}

TEST_CASE("SMT-off machines have singleton cores and no siblings") {
    SysrootFixture fx;
    for (int c = 0; c < 4; ++c)
        fx.add_cpu(c, std::to_string(c));
    const CpuTopology topo = detect_topology(fx.root);
    CHECK_FALSE(topo.smt_enabled);
    CHECK(topo.cores.size() == 4);
    CHECK(topo.sibling_of(2) == std::nullopt);
}

TEST_CASE("offline cpus are skipped, not errors") {
    SysrootFixture fx;
    fx.add_cpu(0, "0");
    fx.add_offline_cpu(1);
    fx.add_cpu(2, "2,3");
    fx.add_cpu(3, "2,3");
    const CpuTopology topo = detect_topology(fx.root);
    CHECK(topo.logical_ids == std::vector<int>{0, 2, 3});
    CHECK(topo.smt_enabled); // one real pair is enough
    CHECK_FALSE(topo.contains(1));
}

TEST_CASE("a sibling list that omits the cpu itself is rejected") {
    SysrootFixture fx;
    fx.add_cpu(0, "1"); // claims a sibling but not itself
    fx.add_cpu(1, "1");
    CHECK_THROWS_AS(detect_topology(fx.root), TopologyUnavailable);
}

TEST_CASE("asymmetric sibling lists are rejected") {
    SysrootFixture fx;
    fx.add_cpu(0, "0,1");
    fx.add_cpu(1, "1"); // cpu1 disagrees about sharing a core
    CHECK_THROWS_AS(detect_topology(fx.root), TopologyUnavailable);
}

TEST_CASE("missing or empty trees are reported as unavailable") {
    CHECK_THROWS_AS(detect_topology(fs::path("/nonexistent-sysroot")),
                    TopologyUnavailable);
    SysrootFixture fx; // root exists but holds no cpu directories
    fs::create_directories(fx.root / "sys/devices/system/cpu");
    CHECK_THROWS_AS(detect_topology(fx.root), TopologyUnavailable);
}

TEST_CASE("SPECWIN_SYSROOT redirects default detection") {
    SysrootFixture fx;
    fx.add_cpu(0, "0,1");
    fx.add_cpu(1, "0,1");
    ::setenv("SPECWIN_SYSROOT", fx.root.c_str(), 1);
    const CpuTopology topo = detect_topology();
    ::unsetenv("SPECWIN_SYSROOT");
    CHECK(topo.logical_ids == std::vector<int>{0, 1});
    CHECK(topo.smt_enabled);
}

TEST_CASE("pinning to a present cpu sticks and restores") {
    const CpuTopology topo = detect_topology("/");
    REQUIRE_FALSE(topo.logical_ids.empty());

    const auto before = current_affinity();
    REQUIRE_FALSE(before.empty());

    const int cpu = topo.logical_ids.front();
    pin_current_thread(cpu, topo);
    CHECK(current_affinity() == std::vector<int>{cpu});

    CHECK_THROWS_AS(pin_current_thread(99999, topo), InvalidCpu);
}
