#include <gtest/gtest.h>

#include <signal.h>
#include <spawn.h>
#include <sys/wait.h>

#include <fstream>
#include <thread>

#include "artemis/service.hpp"
#include "support/stub_detector.hpp"
#include "support/temp_dir.hpp"

extern char** environ;

using namespace artemis;
using namespace artemis::testing;

namespace {

const fs::path kCli = ARTEMIS_CLI_PATH;
const fs::path kSamples = ARTEMIS_SAMPLES_DIR;
const fs::path kGolden = ARTEMIS_GOLDEN_DIR;

struct Run {
  int code = -1;
  std::string out;
  std::string err;
};

std::string quote(const std::string& s) {
  std::string q = "'";
  for (char c : s) q += c == '\'' ? std::string("'\\''") : std::string(1, c);
  return q + "'";
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Run cli(const std::vector<std::string>& args) {
  static TempDir scratch("artemis-cli-out");
  const fs::path out = scratch / "stdout", err = scratch / "stderr";
  std::string cmd = quote(kCli.string());
  for (const auto& a : args) cmd += " " + quote(a);
  cmd += " >" + quote(out.string()) + " 2>" + quote(err.string());
  const int status = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

std::string sample(const std::string& name) { return (kSamples / name).string(); }

std::vector<std::uint32_t> lines_to_faces(const std::string& text) {
  std::vector<std::uint32_t> out;
  std::istringstream in(text);
  for (std::uint32_t f; in >> f;) out.push_back(f);
  return out;
}

struct LiveService {
  explicit LiveService(const fs::path& root) : store(root), service(store) {
    port = service.bind("127.0.0.1", 0);
    service.start();
    client = std::make_unique<httplib::Client>("127.0.0.1", port);
  }
  Store store;
  Service service;
  int port = 0;
  std::unique_ptr<httplib::Client> client;
};

}  // namespace

TEST(Cli, Info) {
  auto r = cli({"info", sample("cube.obj")});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("faces: 12, vertices: 8\n"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("total_area: 6\n"), std::string::npos);

  r = cli({"info", sample("cube.obj"), "--json"});
  EXPECT_EQ(r.code, 0);
  const Json j = Json::parse(r.out);
  EXPECT_EQ(j["faces"], 12);
  EXPECT_EQ(j["vertices"], 8);
  EXPECT_EQ(j["total_area"], 6.0);
  EXPECT_EQ(j["model_id"], sha256_hex(slurp(sample("cube.obj"))));
  EXPECT_EQ(j["normals"], false);

  TempDir dir;
  std::ofstream(dir / "bad.obj") << "v 0 0 0\nv 1 0 0\nf 1 2 9\n";
  r = cli({"info", (dir / "bad.obj").string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("line 3"), std::string::npos) << r.err;
  EXPECT_TRUE(r.out.empty());
  r = cli({"info", (dir / "missing.obj").string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_EQ(cli({}).code, 1);
  EXPECT_EQ(cli({"--help"}).code, 0);
}

TEST(Cli, Select) {
  auto r = cli({"select", sample("triangle.obj"), sample("triangle_lasso_all.json")});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out, "0\n");
  r = cli({"select", sample("triangle.obj"), sample("triangle_lasso_empty.json")});
  EXPECT_EQ(r.code, 0);
  EXPECT_EQ(r.out, "");

  const auto small = lines_to_faces(cli({"select", sample("cube.obj"), sample("cube_brush_r1.json")}).out);
  const auto large = lines_to_faces(cli({"select", sample("cube.obj"), sample("cube_brush_r2.json")}).out);
  EXPECT_FALSE(small.empty());
  EXPECT_GT(large.size(), small.size());
  EXPECT_TRUE(std::includes(large.begin(), large.end(), small.begin(), small.end()));

  TempDir dir;
  std::ofstream(dir / "bad.json") << R"({"mode":"lasso","camera":{"eye":[0,0,2],"target":[0,0,0]},"stroke":{}})";
  r = cli({"select", sample("cube.obj"), (dir / "bad.json").string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("InvalidGesture"), std::string::npos) << r.err;
}

TEST(Cli, SelectGoldenFiles) {
  for (const auto& [mesh, gesture] : std::vector<std::pair<std::string, std::string>>{
           {"cube.obj", "cube_lasso_all.json"},
           {"cube.obj", "cube_brush_r1.json"},
           {"cube.obj", "cube_brush_r2.json"},
           {"triangle.obj", "triangle_lasso_all.json"},
           {"triangle.obj", "triangle_lasso_empty.json"}}) {
    const fs::path golden = kGolden / ("select_" + fs::path(mesh).stem().string() + "_" + gesture);
    const auto r = cli({"select", sample(mesh), sample(gesture), "--json"});
    EXPECT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(r.out, slurp(golden)) << golden;
  }
}

// Same inputs through the CLI and the HTTP service give identical bytes.
TEST(Cli, MatchesServiceOutput) {
  TempDir svc_dir, cli_dir;
  LiveService live(svc_dir.path());
  for (const auto& [mesh, gesture] : std::vector<std::pair<std::string, std::string>>{
           {"cube.obj", "cube_lasso_all.json"}, {"cube.obj", "cube_brush_r2.json"}, {"triangle.obj", "triangle_lasso_all.json"}}) {
    const auto up = live.client->Post("/api/v1/models?format=obj", slurp(sample(mesh)), "model/obj");
    const std::string id = Json::parse(up->body)["model_id"];
    const auto mode = Json::parse(slurp(sample(gesture)))["mode"].get<std::string>();
    const auto http = live.client->Post("/api/v1/models/" + id + "/select/" + mode, slurp(sample(gesture)), "application/json");
    EXPECT_EQ(cli({"select", sample(mesh), sample(gesture), "--json"}).out, http->body) << gesture;
    EXPECT_EQ(cli({"select", id, sample(gesture), "--json", "--store", svc_dir.path().string()}).out, http->body);
  }

  // Annotations created through the CLI export identically from both sides.
  const std::string store = cli_dir.path().string();
  ASSERT_EQ(cli({"annotate", sample("cube.obj"), "--store", store, "--faces", "0,1", "--title", "lid"}).code, 0);
  ASSERT_EQ(cli({"annotate", sample("cube.obj"), "--store", store, "--gesture", sample("cube_lasso_all.json"),
                 "--title", "visible", "--color", "#00ff00"}).code, 0);
  const auto exported = cli({"export", sample("cube.obj"), "--store", store});
  EXPECT_EQ(exported.code, 0);
  EXPECT_EQ(Json::parse(exported.out).size(), 2u);

  const std::string id = sha256_hex(slurp(sample("cube.obj")));
  const auto imported = live.client->Post("/api/v1/models/" + id + "/annotations/import", exported.out, "application/json");
  ASSERT_EQ(imported->status, 200) << imported->body;
  EXPECT_EQ(live.client->Get("/api/v1/models/" + id + "/annotations/export")->body, exported.out);
  EXPECT_EQ(cli({"export", id, "--store", svc_dir.path().string()}).out, exported.out);
}

TEST(Cli, AnnotateExportImport) {
  TempDir dir;
  const std::string store = (dir / "store").string();
  auto r = cli({"annotate", sample("cube.obj"), "--store", store, "--faces", "0,1,2", "--title", "a", "--json",
                "--timestamp", "2024-03-01T10:00:00Z"});
  ASSERT_EQ(r.code, 0) << r.err;
  const Json doc = Json::parse(r.out);
  EXPECT_EQ(doc["created"], "2024-03-01T10:00:00.000Z");
  EXPECT_TRUE(validate_wadm(doc).empty());
  r = cli({"annotate", sample("cube.obj"), "--store", store, "--faces", "5", "--title", "b"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(is_uuid(r.out.substr(0, r.out.size() - 1))) << r.out;

  r = cli({"export", sample("cube.obj"), "--store", store, "-o", (dir / "export.jsonld").string()});
  EXPECT_EQ(r.code, 0);
  EXPECT_EQ(Json::parse(slurp(dir / "export.jsonld")).size(), 2u);

  const std::string other = (dir / "other").string();
  r = cli({"import", sample("cube.obj"), (dir / "export.jsonld").string(), "--store", other});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out, "imported 2\n");
  EXPECT_EQ(cli({"export", sample("cube.obj"), "--store", other}).out, slurp(dir / "export.jsonld"));
  r = cli({"import", sample("cube.obj"), (dir / "export.jsonld").string(), "--store", other});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("IdConflict"), std::string::npos);
  EXPECT_EQ(cli({"import", sample("cube.obj"), (dir / "export.jsonld").string(), "--store", other, "--overwrite"}).code, 0);

  Json bad = Json::parse(slurp(dir / "export.jsonld"));
  bad[1]["target"]["selector"]["faces"] = {40};
  std::ofstream(dir / "bad.jsonld") << bad.dump();
  r = cli({"import", sample("cube.obj"), (dir / "bad.jsonld").string(), "--store", (dir / "third").string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("document 1"), std::string::npos) << r.err;
  EXPECT_NE(r.err.find("$.target.selector.faces"), std::string::npos) << r.err;

  EXPECT_EQ(cli({"annotate", sample("cube.obj"), "--store", store, "--faces", "99"}).code, 1);
  EXPECT_EQ(cli({"annotate", sample("cube.obj"), "--store", store}).code, 1);
  EXPECT_EQ(cli({"annotate", sample("cube.obj"), "--faces", "1"}).code, 1);
  EXPECT_EQ(cli({"export", std::string(64, 'a'), "--store", store}).code, 1);
}

TEST(Cli, Report) {
  TempDir dir;
  const std::string store = dir.path().string();
  auto r = cli({"report", sample("cube.obj"), "--store", store, "--timestamp", "2024-01-01T00:00:00Z"});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("No annotations."), std::string::npos);
  EXPECT_EQ(r.out.find("class=\"annotation\""), std::string::npos);
  EXPECT_EQ(cli({"report", sample("cube.obj"), "--store", store, "--timestamp", "2024-01-01T00:00:00Z"}).out, r.out);

  cli({"annotate", sample("cube.obj"), "--store", store, "--faces", "0,1,2,3,4,5,6,7,8,9,10,11", "--title", "all"});
  r = cli({"report", sample("cube.obj"), "--store", store, "--timestamp", "2024-01-01T00:00:00Z"});
  EXPECT_NE(r.out.find("<th>Region surface area</th><td>6.000000</td>"), std::string::npos);
  EXPECT_EQ(cli({"report", sample("cube.obj"), "--store", store, "--timestamp", "yesterday"}).code, 1);
}

TEST(Cli, Detect) {
  auto r = cli({"detect", "builtin:defect", sample("plane.obj")});
  ASSERT_EQ(r.code, 0) << r.err;
  const Json j = Json::parse(r.out);
  EXPECT_EQ(j["values"].size(), 121u);
  for (const auto& v : j["values"]) EXPECT_EQ(v.get<double>(), 0.0);
  EXPECT_EQ(cli({"detect", "builtin:saliency", sample("plane.obj")}).code, 0);
  EXPECT_EQ(cli({"detect", "nope", sample("plane.obj")}).code, 1);

  TempDir dir;
  StubDetector stub;
  std::ofstream(dir / "detectors.json") << Json::array({{{"name", "slow"}, {"endpoint", stub.url("/slow")}},
                                                        {{"name", "gone"},
                                                         {"endpoint", "http://127.0.0.1:" + std::to_string(closed_port()) + "/"}},
                                                        {{"name", "zeros"}, {"endpoint", stub.url("/zeros")}}})
                                               .dump();
  const std::string reg = (dir / "detectors.json").string();
  EXPECT_EQ(cli({"detect", "zeros", sample("plane.obj"), "--detectors", reg}).code, 0);
  r = cli({"detect", "slow", sample("plane.obj"), "--detectors", reg, "--timeout", "200"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("DetectorTimeout"), std::string::npos) << r.err;
  r = cli({"detect", "gone", sample("plane.obj"), "--detectors", reg, "--timeout", "2000"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("DetectorUnreachable"), std::string::npos) << r.err;

  // With a store the result is cached and served verbatim.
  const std::string store = (dir / "store").string();
  const auto first = cli({"detect", "builtin:defect", sample("plane.obj"), "--store", store});
  EXPECT_EQ(first.code, 0) << first.err;
  EXPECT_EQ(first.out, slurp(fs::path(store) / "models" / j["mesh_id"].get<std::string>() / "heatmaps/defect.json"));
  EXPECT_EQ(cli({"detect", "defect", sample("plane.obj"), "--store", store}).out, first.out);
}

TEST(Cli, Serve) {
  TempDir dir;
  const int port = closed_port();
  const std::string listen = "127.0.0.1:" + std::to_string(port);
  std::vector<std::string> args = {kCli.string(), "serve", "--listen", listen, "--store", dir.path().string()};
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  argv.push_back(nullptr);
  pid_t pid = 0;
  posix_spawn_file_actions_t actions;
  posix_spawn_file_actions_init(&actions);
  posix_spawn_file_actions_addopen(&actions, STDOUT_FILENO, "/dev/null", O_WRONLY, 0);
  ASSERT_EQ(posix_spawn(&pid, argv[0], &actions, nullptr, argv.data(), environ), 0);
  posix_spawn_file_actions_destroy(&actions);

  httplib::Client client("127.0.0.1", port);
  httplib::Result r;
  for (int i = 0; i < 100 && !(r = client.Get("/api/v1/detectors")); ++i) {
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
  }
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 200);
  EXPECT_EQ(Json::parse(r->body).size(), 2u);
  r = client.Post("/api/v1/models?format=obj", slurp(sample("cube.obj")), "model/obj");
  EXPECT_EQ(r->status, 201);

  kill(pid, SIGTERM);
  int status = 0;
  waitpid(pid, &status, 0);
  EXPECT_TRUE(WIFEXITED(status));
  EXPECT_EQ(WEXITSTATUS(status), 0);
  EXPECT_TRUE(fs::exists(dir / ("models/" + sha256_hex(slurp(sample("cube.obj"))) + "/meta.json")));
}
