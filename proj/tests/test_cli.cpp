#include <doctest.h>

#include "mosquito/cli.hpp"
#include "mosquito/wav.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>

using namespace mosquito;
namespace fs = std::filesystem;

namespace {

struct Scratch {
    fs::path dir;
    Scratch()
    {
        static int counter = 0;
        dir = fs::temp_directory_path() / ("mosquito_test_cli_" + std::to_string(counter++));
        fs::remove_all(dir);
        fs::create_directories(dir);
    }
    ~Scratch() { fs::remove_all(dir); }
    std::string operator/(const std::string& name) const { return (dir / name).string(); }
};

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

void spit(const fs::path& p, const std::string& s)
{
    std::ofstream(p, std::ios::binary) << s;
}

// Every file but the manifest must match byte for byte.
void same_outputs(const fs::path& a, const fs::path& b)
{
    std::size_t n = 0;
    for (const auto& e : fs::directory_iterator(a)) {
        const auto name = e.path().filename();
        if (name == "manifest.json")
            continue;
        CAPTURE(name.string());
        REQUIRE(fs::exists(b / name));
        CHECK(slurp(e.path()) == slurp(b / name));
        ++n;
    }
    CHECK(n > 0);
}

void replays_identically(const Scratch& s, const std::string& run)
{
    CAPTURE(run);
    REQUIRE(cli::run({"replay", s / (run + "/manifest.json"), "--out", s / (run + "-again")}) == 0);
    same_outputs(s.dir / run, s.dir / (run + "-again"));
}

const std::string kConfigs = MOSQUITO_SOURCE_DIR "/configs";

} // namespace

TEST_CASE("modulate then demodulate returns the file")
{
    Scratch s;
    std::mt19937 rng(4);
    std::string payload(100, '\0');
    for (char& c : payload)
        c = static_cast<char>(rng());
    spit(s / "in.bin", payload);

    REQUIRE(cli::run({"modulate", s / "in.bin", "--out", s / "mod"}) == 0);
    const auto wav = read_wav(s / "mod/modulated.wav");
    CHECK(wav.sample_rate == 48000);
    REQUIRE(cli::run({"demodulate", s / "mod/modulated.wav", "--out", s / "dem"}) == 0);
    CHECK(slurp(s / "dem/demodulated.bin") == payload);
    CHECK(fs::exists(s / "dem/frames.csv"));

    const auto manifest = nlohmann::json::parse(slurp(s / "mod/manifest.json"));
    CHECK(manifest["command"] == "modulate");
    CHECK(manifest["exit_code"] == 0);
    CHECK(manifest["outputs"].size() == 1);

    replays_identically(s, "mod");
    replays_identically(s, "dem");
}

TEST_CASE("slow rate roundtrip")
{
    Scratch s;
    spit(s / "in.bin", "hi");
    REQUIRE(cli::run({"modulate", s / "in.bin", "--rate", "10", "--out", s / "mod"}) == 0);
    REQUIRE(cli::run({"demodulate", s / "mod/modulated.wav", "--rate", "10", "--out", s / "dem"}) == 0);
    CHECK(slurp(s / "dem/demodulated.bin") == "hi");
}

TEST_CASE("usage and input errors exit with 2")
{
    Scratch s;
    spit(s / "empty.bin", "");
    CHECK(cli::run({"modulate", s / "empty.bin", "--out", s / "e"}) == 2);
    CHECK_FALSE(fs::exists(s / "e/manifest.json"));
    CHECK(cli::run({"modulate", s / "missing.bin", "--out", s / "m"}) == 2);
    CHECK(cli::run({"frobnicate"}) == 2);
    CHECK(cli::run({}) == 2);
    spit(s / "x.bin", "x");
    CHECK(cli::run({"simulate-session", "--preset", "nowhere", "--out", s / "p"}) == 2);

    // rate mismatch between a recording and the configuration
    SampleBuffer other{std::vector<double>(4410, 0.0), 44100};
    write_wav(s / "other.wav", other);
    CHECK(cli::run({"demodulate", s / "other.wav", "--out", s / "d"}) == 2);
}

TEST_CASE("undecodable recording exits with 1")
{
    Scratch s;
    write_wav(s / "quiet.wav", SampleBuffer{std::vector<double>(48000, 0.0), 48000});
    CHECK(cli::run({"demodulate", s / "quiet.wav", "--out", s / "d"}) == 1);
}

TEST_CASE("simulated session goodput")
{
    Scratch s;
    REQUIRE(cli::run({"simulate-session", "--config", kConfigs + "/session-noiseless.json", "--out", s / "sim"}) == 0);
    const auto summary = nlohmann::json::parse(slurp(s / "sim/summary.json"));
    CHECK(summary["complete"] == true);
    const double goodput = summary["goodput_bps"];
    const double bound = summary["protocol_efficiency_bound_bps"];
    CHECK(goodput > 0.0);
    CHECK(std::abs(goodput - bound) <= 0.2 * bound);
    CHECK(fs::exists(s / "sim/trace.json"));
    CHECK(slurp(s / "sim/delivered.bin").size() == summary["payload_bytes"].get<std::size_t>());
    replays_identically(s, "sim");
}

TEST_CASE("unidirectional config runs")
{
    Scratch s;
    REQUIRE(cli::run({"simulate-session", "--config", kConfigs + "/unidirectional.json", "--out", s / "uni"}) == 0);
    const auto trace = nlohmann::json::parse(slurp(s / "uni/trace.json"));
    CHECK(trace["mode"] == "unidirectional");
}

TEST_CASE("analysis commands replay identically")
{
    Scratch s;
    REQUIRE(cli::run({"capacity", "--simulate", "--duration", "2", "--preset", "paper-3m", "--out", s / "cap"}) == 0);
    CHECK(fs::exists(s / "cap/capacity.csv"));
    replays_identically(s, "cap");

    REQUIRE(cli::run({"ber-sweep", "--rates", "166", "--presets", "noiseless,paper-3m", "--bits", "500", "--seeds",
                      "2", "--threads", "2", "--out", s / "ber"}) == 0);
    const auto csv = slurp(s / "ber/ber.csv");
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
    replays_identically(s, "ber");

    spit(s / "in.bin", "ping");
    REQUIRE(cli::run({"modulate", s / "in.bin", "--out", s / "mod"}) == 0);
    const auto wav = s / "mod/modulated.wav";
    REQUIRE(cli::run({"detect", wav, "--out", s / "det"}) == 0);
    replays_identically(s, "det");
    REQUIRE(cli::run({"filter", wav, "--cutoff", "18000", "--out", s / "fil"}) == 0);
    replays_identically(s, "fil");
    REQUIRE(cli::run({"spectrogram", wav, "--out", s / "png"}) == 0);
    CHECK(slurp(s / "png/spectrogram.png").substr(1, 3) == "PNG");
    replays_identically(s, "png");

    // a replay records the original command line
    REQUIRE(cli::run({"replay", s / "png-again/manifest.json", "--out", s / "twice"}) == 0);
    same_outputs(s.dir / "png", s.dir / "twice");
}
