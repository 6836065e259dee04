// End-to-end smoke tests for the oatomo CLI. Each case shells out to the
// binary named by OATOMO_CLI (set by ctest) and inspects exit codes, stderr
// and the artifacts left behind. The matrix cache is redirected into the
// scratch directory so runs stay hermetic.

#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "oat/imageio.hpp"
#include "oat/metrics.hpp"

namespace fs = std::filesystem;

namespace {

std::string cli_path() {
    const char* p = std::getenv("OATOMO_CLI");
    REQUIRE(p != nullptr);
    return p;
}

fs::path scratch() {
    static const fs::path dir = [] {
        fs::path d = fs::current_path() / "cli_smoke_scratch";
        fs::remove_all(d);
        fs::create_directories(d / "cache");
        setenv("OATOMO_CACHE", (d / "cache").c_str(), 1);
        return d;
    }();
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::ostringstream os;
    os << f.rdbuf();
    return os.str();
}

// Runs "oatomo <args>", returns the exit status; stderr and stdout land in
// scratch files and are handed back on request.
int run(const std::string& args, std::string* err = nullptr, std::string* out = nullptr) {
    const fs::path errf = scratch() / "last_stderr.txt";
    const fs::path outf = scratch() / "last_stdout.txt";
    const std::string cmd =
        cli_path() + " " + args + " > " + outf.string() + " 2> " + errf.string();
    const int rc = std::system(cmd.c_str());
    REQUIRE(WIFEXITED(rc));
    if (err) *err = slurp(errf);
    if (out) *out = slurp(outf);
    return WEXITSTATUS(rc);
}

const std::string kGrid = " --set grid.nx=24 --set grid.ny=24 --set grid.pixel_mm=0.1";

// Shared 24x24 disk phantom and its noiseless 16-detector sinogram. Built on
// first use so the cases stay independent under test filtering.
void ensure_disk_artifacts() {
    static bool done = false;
    if (done) return;
    const fs::path img = scratch() / "disk.img";
    const fs::path sin = scratch() / "disk.sin";
    REQUIRE(run("phantom --out " + img.string() +
                " --set phantom.kind=disk --set phantom.size=24") == 0);
    REQUIRE(run("forward --in " + img.string() + " --out " + sin.string() +
                " --set geometry.radius_mm=20 --set geometry.n_detectors=16") == 0);
    done = true;
}

} // namespace

TEST_CASE("phantom runs are reproducible and carry provenance") {
    const fs::path a = scratch() / "a.img";
    const fs::path b = scratch() / "b.img";
    const std::string spec = " --set phantom.size=32 --set phantom.seed=9";
    REQUIRE(run("phantom --out " + a.string() + spec) == 0);
    REQUIRE(run("phantom --out " + b.string() + spec) == 0);
    CHECK(slurp(a) == slurp(b));
    CHECK(!slurp(a).empty());

    const std::string sidecar = slurp(fs::path(a.string() + ".json"));
    CHECK(sidecar.find("\"provenance\"") != std::string::npos);
    CHECK(sidecar.find("\"command\"") != std::string::npos);
    CHECK(sidecar.find("\"config_digest\"") != std::string::npos);

    const fs::path c = scratch() / "c.img";
    REQUIRE(run("phantom --out " + c.string() + " --set phantom.size=32 --set phantom.seed=10") == 0);
    CHECK(slurp(a) != slurp(c));
}

TEST_CASE("forward maps a zero image to a zero sinogram and populates the cache") {
    const fs::path img = scratch() / "zero.img";
    const fs::path sin = scratch() / "zero.sin";
    REQUIRE(run("phantom --out " + img.string() +
                " --set phantom.kind=disk --set phantom.disk_height=0.0"
                " --set phantom.size=24") == 0);
    REQUIRE(run("forward --in " + img.string() + " --out " + sin.string() +
                " --set geometry.radius_mm=20 --set geometry.n_detectors=6") == 0);

    const oat::Sinogram s = oat::read_sinogram(sin.string());
    CHECK(s.geom.n_detectors == 6);
    double peak = 0.0;
    for (double v : s.values) peak = std::max(peak, std::abs(v));
    CHECK(peak == 0.0);

    int cached = 0;
    for (const auto& e : fs::directory_iterator(scratch() / "cache"))
        if (e.path().extension() == ".oamm") ++cached;
    CHECK(cached >= 1);

    // second run must reuse the cached matrix and reproduce the output
    const fs::path sin2 = scratch() / "zero2.sin";
    REQUIRE(run("forward --in " + img.string() + " --out " + sin2.string() +
                " --set geometry.radius_mm=20 --set geometry.n_detectors=6") == 0);
    CHECK(slurp(sin) == slurp(sin2));
}

TEST_CASE("reconstruct recovers the disk from noiseless data") {
    ensure_disk_artifacts();
    const fs::path rec = scratch() / "rec_lsqr.img";
    REQUIRE(run("reconstruct --in " + (scratch() / "disk.sin").string() + " --out " +
                rec.string() + kGrid + " --set method.name=lsqr --set method.iters=120") == 0);

    const oat::ImageGrid2D ref = oat::read_image((scratch() / "disk.img").string());
    const oat::ImageGrid2D u = oat::read_image(rec.string());
    CHECK(oat::mad(ref, u) < 0.08);
}

TEST_CASE("reconstruct --trace writes one CSV row per iteration") {
    ensure_disk_artifacts();
    const fs::path rec = scratch() / "rec_a2tv.img";
    const fs::path tr = scratch() / "trace.csv";
    REQUIRE(run("reconstruct --in " + (scratch() / "disk.sin").string() + " --out " +
                rec.string() + " --trace " + tr.string() + kGrid +
                " --set method.name=a2tv --set method.iters=12") == 0);

    std::istringstream is(slurp(tr));
    std::string line;
    std::vector<std::string> lines;
    while (std::getline(is, line)) lines.push_back(line);
    REQUIRE(lines.size() == 13);
    CHECK(lines[0] == "iter,fidelity_term,regularizer_term,total,tau,sigma");
    CHECK(lines[1].rfind("0,", 0) == 0);
    CHECK(fs::exists(fs::path(tr.string() + ".provenance.json")));
}

TEST_CASE("unknown method name is a usage error") {
    ensure_disk_artifacts();
    std::string err;
    const int rc = run("reconstruct --in " + (scratch() / "disk.sin").string() + " --out " +
                           (scratch() / "nope.img").string() + kGrid +
                           " --set method.name=foo",
                       &err);
    CHECK(rc == 2);
    CHECK(err.find("ERROR: unknown method") != std::string::npos);
}

TEST_CASE("malformed --set is a usage error") {
    std::string err;
    const int rc = run("phantom --out " + (scratch() / "nope2.img").string() +
                           " --set phantom.size",
                       &err);
    CHECK(rc == 2);
    CHECK(err.find("--set expects key=value") != std::string::npos);
}

TEST_CASE("degrade without noise or subsampling is the identity") {
    ensure_disk_artifacts();
    const fs::path out = scratch() / "deg_id.sin";
    REQUIRE(run("degrade --in " + (scratch() / "disk.sin").string() + " --out " + out.string() +
                " --set degrade.rel_std=0.0") == 0);
    const oat::Sinogram a = oat::read_sinogram((scratch() / "disk.sin").string());
    const oat::Sinogram b = oat::read_sinogram(out.string());
    CHECK(a.values == b.values);
    CHECK(b.geom.n_detectors == 16);
}

TEST_CASE("degrade subsamples detectors and perturbs the data") {
    ensure_disk_artifacts();
    const fs::path out = scratch() / "deg.sin";
    REQUIRE(run("degrade --in " + (scratch() / "disk.sin").string() + " --out " + out.string() +
                " --set degrade.n_keep=4 --set degrade.rel_std=0.1 --set degrade.seed=3") == 0);
    const oat::Sinogram d = oat::read_sinogram(out.string());
    CHECK(d.geom.n_detectors == 4);
    CHECK(d.geom.has_first_angle);

    const std::string sidecar = slurp(fs::path(out.string() + ".json"));
    CHECK(sidecar.find("\"seeds\"") != std::string::npos);
}

TEST_CASE("scan writes a MAD-sorted CSV, a montage, and reports the argmin") {
    ensure_disk_artifacts();
    const fs::path csv = scratch() / "scan.csv";
    const fs::path mon = scratch() / "scan.pgm";
    std::string out;
    REQUIRE(run("scan --in " + (scratch() / "disk.sin").string() + " --reference " +
                    (scratch() / "disk.img").string() + " --out-csv " + csv.string() +
                    " --out-montage " + mon.string() + kGrid + " --jobs 2" +
                    " --set method.name=lsqr --set scan.param1.name=iters" +
                    " --set scan.param1.values=[10,40]" +
                    " --set scan.param2.name=damp --set scan.param2.values=[0.0,0.5]",
                nullptr, &out) == 0);
    CHECK(out.find("argmin:") != std::string::npos);

    std::istringstream is(slurp(csv));
    std::string line;
    std::vector<std::string> lines;
    while (std::getline(is, line)) lines.push_back(line);
    REQUIRE(lines.size() == 5);
    CHECK(lines[0] == "iters,damp,mad");
    double prev = -1.0;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        const auto last_comma = lines[i].rfind(',');
        const double m = std::stod(lines[i].substr(last_comma + 1));
        CHECK(m >= prev);
        prev = m;
    }

    const std::string legend = slurp(fs::path(mon.string() + ".json"));
    CHECK(legend.find("\"tiles\"") != std::string::npos);
    CHECK(legend.find("\"mad\"") != std::string::npos);
    CHECK(slurp(mon).rfind("P5\n", 0) == 0);
}

TEST_CASE("a 1x1 scan --out-best matches the plain reconstruction") {
    ensure_disk_artifacts();
    const fs::path best = scratch() / "best.img";
    const fs::path rec = scratch() / "rec40.img";
    const std::string method = " --set method.name=lsqr --set method.iters=40";
    REQUIRE(run("scan --in " + (scratch() / "disk.sin").string() + " --reference " +
                (scratch() / "disk.img").string() + " --out-csv " +
                (scratch() / "scan11.csv").string() + " --out-montage " +
                (scratch() / "scan11.pgm").string() + " --out-best " + best.string() + kGrid +
                method + " --set scan.param1.name=damp --set scan.param1.values=[0.0]" +
                " --set scan.param2.name=atol --set scan.param2.values=[0.0]") == 0);
    REQUIRE(run("reconstruct --in " + (scratch() / "disk.sin").string() + " --out " +
                rec.string() + kGrid + method) == 0);
    CHECK(slurp(best) == slurp(rec));
}

TEST_CASE("evaluate reports zero MAD against itself") {
    ensure_disk_artifacts();
    const fs::path rep = scratch() / "self.json";
    REQUIRE(run("evaluate --reference " + (scratch() / "disk.img").string() + " --in " +
                (scratch() / "disk.img").string() + " --out-json " + rep.string()) == 0);
    const std::string body = slurp(rep);
    CHECK(body.find("\"mad\": 0.0") != std::string::npos);
    CHECK(body.find("\"label\": \"disk\"") != std::string::npos);
}

TEST_CASE("evaluate writes the slice CSV when asked") {
    ensure_disk_artifacts();
    const fs::path rep = scratch() / "slice.json";
    const fs::path csv = scratch() / "slice.csv";
    REQUIRE(run("evaluate --reference " + (scratch() / "disk.img").string() + " --in " +
                (scratch() / "disk.img").string() + " --label recon --out-json " +
                rep.string() + " --out-csv " + csv.string() +
                " --set evaluate.slice.axis=row --set evaluate.slice.index=12" +
                " --set evaluate.window_mm=[-1.0,1.0]") == 0);
    const std::string body = slurp(csv);
    CHECK(body.rfind("position_mm,reference,recon\n", 0) == 0);
    std::size_t rows = 0;
    for (char ch : body)
        if (ch == '\n') ++rows;
    CHECK(rows == 25); // header + one line per pixel column
    CHECK(slurp(rep).find("\"peak_to_peak\"") != std::string::npos);
}
