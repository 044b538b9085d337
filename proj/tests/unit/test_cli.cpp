#include "doctest.h"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>
#include <unistd.h>

#include "tracebin/evaluator.hpp"
#include "tracebin/tracer.hpp"

namespace fs = std::filesystem;

namespace {

struct Run {
  int status = -1;
  std::string out;
};

struct Workspace {
  fs::path dir;
  Workspace() {
    dir = fs::temp_directory_path() / ("tracebin-cli-" + std::to_string(::getpid()));
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  ~Workspace() {
    std::error_code ec;
    fs::remove_all(dir, ec);
  }

  /// Runs the CLI in the workspace; stdout and stderr are captured together.
  Run operator()(const std::string& args) const {
    std::string cmd = "cd '" + dir.string() + "' && TRACEBIN_COLOR=0 '" TRACEBIN_BINARY "' " + args + " 2>&1";
    Run r;
    FILE* p = ::popen(cmd.c_str(), "r");
    REQUIRE(p);
    char buf[4096];
    std::size_t n;
    while ((n = std::fread(buf, 1, sizeof buf, p)) > 0) r.out.append(buf, n);
    int raw = ::pclose(p);
    r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    return r;
  }

  std::string read(const std::string& name) const {
    std::ifstream in(dir / name);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
  }
};

}  // namespace

TEST_CASE("usage errors exit 2") {
  Workspace ws;
  CHECK(ws("").status == 2);
  CHECK(ws("frobnicate").status == 2);
  CHECK(ws("eval --trace").status == 2);
  CHECK(ws("refdisasm --image nope.img --out x").status == 2);
  CHECK(ws("corpus gen --out-dir c").status == 2);
  CHECK(ws("--help").status == 0);
}

TEST_CASE("file-driven pipeline") {
  Workspace ws;
  auto gen = ws("corpus gen jump_table data_in_code --out-dir c");
  REQUIRE(gen.status == 0);
  for (const char* f : {"c/jump_table.img", "c/jump_table.truth.idf", "c/jump_table.trace", "c/jump_table.elf"})
    CHECK(fs::exists(ws.dir / f));
  CHECK(ws("corpus gen no_such_case --out-dir c").status == 1);

  REQUIRE(ws("refdisasm --image c/jump_table.img --mode recursive --out rd.idf").status == 0);
  REQUIRE(ws("refdisasm --image c/jump_table.img --mode recursive --endbr --out rd_endbr.idf").status == 0);
  auto eval = ws("eval --trace c/jump_table.trace --view rd.idf --out rep.csv --target jt");
  REQUIRE(eval.status == 0);
  CHECK(eval.out.find("missing=14 mismatch=0 total=14 bucket=A") != std::string::npos);
  CHECK(ws.read("rep.csv").rfind("# tracebin-report target=jt tool=refdisasm-recursive", 0) == 0);
  CHECK(ws("eval --trace c/jump_table.trace --view rd.idf --out rep.json --json").status == 0);
  CHECK(tracebin::report_from_json(nlohmann::json::parse(ws.read("rep.json"))).missing_count == 14);

  auto ex = ws("explain --trace c/jump_table.trace --view rd.idf --report rep.csv --out ex.csv");
  REQUIRE(ex.status == 0);
  CHECK(ex.out.find("indirect=14") != std::string::npos);
  CHECK(ws.read("ex.csv").find("1024,TARGET_ERROR,indirect,1081,1024,5") != std::string::npos);

  REQUIRE(ws("refdisasm --image c/data_in_code.img --mode linear --out ls.idf").status == 0);
  auto ls = ws("eval --trace c/data_in_code.trace --view ls.idf --out dic.csv");
  CHECK(ls.out.find("missing=4 ") != std::string::npos);

  std::ofstream(ws.dir / "listing.txt") << "  401000:\t55\tpush %rbp\n  401001:\t48 89 e5\tmov %rsp,%rbp\n";
  REQUIRE(ws("ingest --format objdump --preset angr listing.txt --out od.idf").status == 0);
  CHECK(ws.read("od.idf").find("1001 3 4889e5") != std::string::npos);
  CHECK(ws("ingest --format objdump --preset ghidra listing.txt --out bad.idf").status == 0);
  CHECK(ws("ingest --format objdump --base 500000 listing.txt --out bad.idf").status == 1);

  REQUIRE(ws("merge c/jump_table.trace c/jump_table.trace --out m.trace").status == 0);
  CHECK(ws.read("m.trace") == ws.read("c/jump_table.trace"));
  CHECK(ws("eval --trace c/jump_table.trace --view rep.csv --out x.csv").status == 1);

  std::ofstream(ws.dir / "spec.csv") << "trace,view,tool,target\n"
                                        "c/jump_table.trace,rd.idf,rd,jt\n"
                                        "c/jump_table.trace,rd_endbr.idf,rd-endbr,jt\n";
  auto batch = ws("batch --spec spec.csv --out-dir out --format csv --jobs 2");
  CHECK(batch.status == 0);
  CHECK(batch.out.find("rd,1,0,1,0,0,0,14,0,0,14,0,0") != std::string::npos);
  CHECK(fs::exists(ws.dir / "out/jt__rd__vs__rd-endbr.delta.csv"));
  auto report = ws("report out --format csv");
  CHECK(report.status == 0);
  CHECK(report.out == batch.out);
  auto diff = ws("report --diff out/jt__rd.report.csv out/jt__rd-endbr.report.csv");
  CHECK(diff.out.rfind("loc_hex,side\n", 0) == 0);

  std::ofstream(ws.dir / "spec_bad.csv") << "trace,view,tool,target\nnope.trace,rd.idf,rd,jt\n";
  CHECK(ws("batch --spec spec_bad.csv --out-dir out2").status == 1);
}

TEST_CASE("trace and patch subcommands" * doctest::skip(!tracebin::tracer::platform_supported())) {
  Workspace ws;
  REQUIRE(ws("corpus gen jump_table --out-dir c").status == 0);
  auto tr = ws("trace --out jt.trace --stdout /dev/null -- c/jump_table.elf");
  REQUIRE(tr.status == 0);
  CHECK(ws("trace --out x.trace -- /nonexistent/prog").status == 1);
  REQUIRE(ws("refdisasm --image c/jump_table.elf --out rd.idf").status == 0);
  CHECK(ws("eval --trace jt.trace --view rd.idf --out rep.csv").out.find("missing=14") != std::string::npos);

  REQUIRE(ws("patch plan --trace jt.trace --view rd.idf --image c/jump_table.elf --out plans.txt").status == 0);
  REQUIRE(ws("patch apply --plans plans.txt --in c/jump_table.elf --out p.elf").status == 0);
  CHECK(ws("patch apply --plans plans.txt --in p.elf --out pp.elf").status == 1);
  CHECK(ws("patch apply --plans plans.txt --index 9 --in c/jump_table.elf --out pp.elf").status == 2);
  REQUIRE(ws("refdisasm --image p.elf --out prd.idf").status == 0);
  auto v = ws("patch verify --elf p.elf --view prd.idf --plans plans.txt");
  CHECK(v.status == 0);
  CHECK(v.out == "hidden_and_reached\n");
  auto skipped = ws("patch verify --elf p.elf --view prd.idf --plans plans.txt -- x y");
  CHECK(skipped.out == "unreached\n");
}
