#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <unistd.h>

namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

void spit(const fs::path& p, const std::string& data) {
    std::ofstream(p, std::ios::binary) << data;
}

class Cli : public ::testing::Test {
protected:
    static fs::path dir;

    static void SetUpTestSuite() {
        dir = fs::temp_directory_path() / ("selm_cli_" + std::to_string(::getpid()));
        fs::create_directories(dir);
        // A freshly initialized (untrained) model is enough to exercise the commands.
        ASSERT_EQ(run("--seed 3 pretrain --corpus " SELM_DATA_DIR "/sample_corpus.txt --steps 0 -o model.slmw"), 0);
        ASSERT_EQ(run("--seed 4 pretrain --corpus " SELM_DATA_DIR "/sample_corpus.txt --steps 0 -o other.slmw"), 0);
        ASSERT_EQ(run("keygen -o alice.key"), 0);
        ASSERT_EQ(run("keygen -o eve.key"), 0);
    }
    static void TearDownTestSuite() { fs::remove_all(dir); }

    // Runs the CLI inside `dir`; stderr goes to dir/stderr.txt. Returns the exit status.
    static int run(const std::string& args, const std::string& env = "") {
        const std::string cmd = "cd '" + dir.string() + "' && " + env + " '" SELM_CLI "' " + args + " 2> stderr.txt";
        const int rc = std::system(cmd.c_str());
        return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
    }
    static std::string err() { return slurp(dir / "stderr.txt"); }
};

fs::path Cli::dir;

} // namespace

TEST_F(Cli, EncryptDecryptRoundtrip) {
    const std::string msg = "Attack at dawn.\n\x01\xff binary ok";
    spit(dir / "msg.txt", msg);
    ASSERT_EQ(run("encrypt -k alice.key -m model.slmw -i msg.txt -o msg.selm --d 256"), 0) << err();
    EXPECT_EQ(slurp(dir / "msg.txt"), msg);
    EXPECT_EQ(slurp(dir / "msg.selm").substr(0, 4), "SELM");
    ASSERT_EQ(run("decrypt -k alice.key -m model.slmw -i msg.selm -o back.txt"), 0) << err();
    EXPECT_EQ(slurp(dir / "back.txt"), msg);
    EXPECT_EQ(fs::status(dir / "back.txt").permissions() & fs::perms::group_read, fs::perms::none);
}

TEST_F(Cli, InsecureSeedMakesCiphertextReproducible) {
    spit(dir / "r.txt", "same input");
    ASSERT_EQ(run("--insecure-seed 9 encrypt -k alice.key -m model.slmw -i r.txt -o r1.selm --d 128"), 0) << err();
    ASSERT_EQ(run("--insecure-seed 9 encrypt -k alice.key -m model.slmw -i r.txt -o r2.selm --d 128"), 0) << err();
    ASSERT_EQ(run("encrypt -k alice.key -m model.slmw -i r.txt -o r3.selm --d 128"), 0) << err();
    EXPECT_EQ(slurp(dir / "r1.selm"), slurp(dir / "r2.selm"));
    EXPECT_NE(slurp(dir / "r1.selm"), slurp(dir / "r3.selm"));
}

TEST_F(Cli, WrongKeyDecryptsWithWarning) {
    const std::string msg = "a secret of some length";
    spit(dir / "w.txt", msg);
    ASSERT_EQ(run("encrypt -k alice.key -m model.slmw -i w.txt -o w.selm --d 256"), 0) << err();
    ASSERT_EQ(run("decrypt -k eve.key -m model.slmw -i w.selm -o w.out"), 0) << err();
    EXPECT_NE(err().find("warning"), std::string::npos);
    EXPECT_NE(slurp(dir / "w.out"), msg);
}

TEST_F(Cli, ExitCodes) {
    spit(dir / "e.txt", "exit codes");
    EXPECT_EQ(run("encrypt -k alice.key -m model.slmw -i e.txt"), 2);
    EXPECT_EQ(err().rfind("error: UsageError: ", 0), 0u) << err();
    EXPECT_EQ(run("encrypt -k alice.key -m model.slmw -i e.txt -o e.selm --reg bogus"), 2);
    EXPECT_EQ(run("encrypt -k missing.key -m model.slmw -i e.txt -o e.selm"), 3);
    EXPECT_EQ(err().rfind("error: IoError: ", 0), 0u) << err();

    spit(dir / "garbage.selm", "not a ciphertext at all");
    EXPECT_EQ(run("decrypt -k alice.key -m model.slmw -i garbage.selm -o g.out"), 4);
    EXPECT_EQ(err().rfind("error: FormatError: ", 0), 0u) << err();

    spit(dir / "empty.txt", "");
    EXPECT_EQ(run("encrypt -k alice.key -m model.slmw -i empty.txt -o x.selm"), 5);

    spit(dir / "long.txt", std::string(64, 'q') + "zxcvbnm,./;'[]1234567890-=");
    EXPECT_EQ(run("encrypt -k alice.key -m model.slmw -i long.txt -o x.selm --d 64 --max-epochs 1"), 6);
    EXPECT_EQ(err().rfind("error: EncryptionBudgetExceeded: ", 0), 0u) << err();

    ASSERT_EQ(run("encrypt -k alice.key -m model.slmw -i e.txt -o e.selm --d 128"), 0) << err();
    EXPECT_EQ(run("decrypt -k alice.key -m other.slmw -i e.selm -o e.out"), 7);
    EXPECT_EQ(err().rfind("error: ModelMismatch: ", 0), 0u) << err();
    EXPECT_FALSE(fs::exists(dir / "e.out"));
}

TEST_F(Cli, ConfigFileWithFlagOverride) {
    spit(dir / "c.txt", "configured");
    spit(dir / "enc.conf", "# encryption settings\nd = 64\n\nmax-epochs = \"1\"\n");
    EXPECT_EQ(run("encrypt --config enc.conf -k alice.key -m model.slmw -i c.txt -o c.selm"), 6);
    ASSERT_EQ(run("encrypt --config enc.conf -k alice.key -m model.slmw -i c.txt -o c.selm --max-epochs 5000"), 0)
        << err();
    // Header (52 bytes) + one chunk (2 + 36 + 4 bytes) + 64 floats.
    EXPECT_EQ(fs::file_size(dir / "c.selm"), 52u + 42u + 4u * 64u);
    spit(dir / "bad.conf", "d 64\n");
    EXPECT_EQ(run("encrypt --config bad.conf -k alice.key -m model.slmw -i c.txt -o c.selm"), 2);
    spit(dir / "unknown.conf", "colour = blue\n");
    EXPECT_EQ(run("encrypt --config unknown.conf -k alice.key -m model.slmw -i c.txt -o c.selm"), 2);
}

TEST_F(Cli, MicroConfigAttackWritesEveryCell) {
    ASSERT_EQ(run("--seed 1 attack --config " SELM_DATA_DIR "/micro_attack.conf -k alice.key -m model.slmw -o grid.txt --table t.txt"),
              0)
        << err();
    const std::string grid = slurp(dir / "grid.txt");
    for (const char* clf : {"knn", "lda", "ffnn"})
        for (const char* mode : {"full", "features"}) {
            const std::string key = std::string("row.rb.") + clf + "." + mode + ".";
            for (const char* field : {"accuracy=", "correct=", "n=", "p_value=", "reject_null="})
                EXPECT_NE(grid.find(key + field), std::string::npos) << key + field;
        }
    for (const char* clf : {"svm", "gradboost"})
        for (const char* mode : {"full", "features"})
            EXPECT_NE(grid.find(std::string("row.rb.") + clf + "." + mode + ".status=absent"), std::string::npos);
    for (const char* feat : {"mean", "std", "max", "min", "l1", "l2"})
        EXPECT_NE(grid.find(std::string("row.rb.mi.") + feat + "="), std::string::npos);
    EXPECT_FALSE(slurp(dir / "t.txt").empty());

    // Same seed and key, same report.
    ASSERT_EQ(run("--seed 1 attack --config " SELM_DATA_DIR "/micro_attack.conf -k alice.key -m model.slmw -o grid2.txt --table t2.txt"),
              0);
    EXPECT_EQ(slurp(dir / "grid2.txt"), grid);
}

TEST_F(Cli, GenCorpusThenAttackDataset) {
    const std::string gen = "gen-corpus -m model.slmw --m0 bytes --m1 text:" SELM_DATA_DIR
                            "/sample_corpus.txt --length 3 --n-per-class 5 --d 64 -o ";
    ASSERT_EQ(run(gen + "a.slds", "SELM_SEED=5"), 0) << err();
    ASSERT_EQ(run("--insecure-seed 2 " + gen + "b.slds", "SELM_SEED=5"), 0) << err();
    ASSERT_EQ(run("--insecure-seed 2 " + gen + "c.slds", "SELM_SEED=5"), 0) << err();
    const std::string a = slurp(dir / "a.slds");
    EXPECT_EQ(a.substr(0, 4), "SLDS");
    EXPECT_EQ(a.size(), 4 + 1 + 4 + 4 + 10 * (1 + 4 * 64u));
    EXPECT_EQ(slurp(dir / "b.slds"), slurp(dir / "c.slds"));
    EXPECT_NE(a, slurp(dir / "b.slds"));

    ASSERT_EQ(run("--seed 2 attack --dataset x=a.slds --classifiers lda,knn --modes features --knn-ks 1,3 -o ag.txt"), 0)
        << err();
    const std::string grid = slurp(dir / "ag.txt");
    EXPECT_NE(grid.find("row.x.lda.features.n=2"), std::string::npos) << grid;
    EXPECT_EQ(grid.find(".full."), std::string::npos);
    EXPECT_EQ(run("--seed 2 attack --dataset x=missing.slds -o ag.txt"), 3);
    EXPECT_EQ(run("--seed 2 attack --dataset x=a.slds --classifiers nope -o ag.txt"), 2);
}

TEST_F(Cli, CalibratePrintsTargets) {
    ASSERT_EQ(run("--seed 1 calibrate -m model.slmw --message bytes --n 2 --length 2 --d 64 > cal.txt"), 0) << err();
    const std::string out = slurp(dir / "cal.txt");
    EXPECT_NE(out.find("alpha = "), std::string::npos);
    EXPECT_NE(out.find("sigma = "), std::string::npos);
}
