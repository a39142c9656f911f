#include <CLI11.hpp>

#include <csignal>
#include <cstdlib>
#include <iostream>

#include "crskit/artifact.h"
#include "crskit/demo.h"
#include "crskit/error.h"
#include "crskit/hub_server.h"
#include "crskit/loader.h"
#include "crskit/service.h"

namespace {

std::function<void()> g_on_signal;

void handle_signal(int) {
  if (g_on_signal) g_on_signal();
}

std::string read_context(const std::string& context, const std::string& file) {
  if (!file.empty()) return crskit::read_file(file);
  return context;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"crskit: modular conversational recommender toolkit"};
  app.require_subcommand(1);

  // serve
  auto* serve = app.add_subcommand("serve", "Run the chat service");
  std::string config_path;
  int port = 8080;
  std::string host = "127.0.0.1";
  bool offline = false;
  std::string trace_export;
  serve->add_option("--config", config_path, "Service config (JSON)")->required();
  serve->add_option("--port", port, "Port to listen on")->capture_default_str();
  serve->add_option("--host", host, "Address to bind")->capture_default_str();
  serve->add_flag("--offline", offline, "Force template generators (no LLM calls)");
  serve->add_option("--trace-export", trace_export, "Append finished spans to this JSONL file");

  // init-demo
  auto* init = app.add_subcommand("init-demo", "Train the demo recommender and save pipelines");
  std::string out_dir = "demo";
  std::uint64_t seed = 7;
  bool demo_offline = false;
  init->add_option("--out", out_dir, "Output directory")->capture_default_str();
  init->add_option("--seed", seed, "Training seed")->capture_default_str();
  init->add_flag("--offline", demo_offline, "Save generators in offline mode");

  // respond
  auto* respond = app.add_subcommand("respond", "Run one pipeline call and print the result");
  std::string pipeline_ref, context, context_file, kwargs_text = "{}", hub_url;
  respond->add_option("--pipeline", pipeline_ref, "Pipeline artifact (dir or hub name)")
      ->required();
  respond->add_option("--context", context, "Dialog in wire format");
  respond->add_option("--context-file", context_file, "File holding the dialog");
  respond->add_option("--kwargs", kwargs_text, "JSON kwargs routed by \"rec\"/\"gen\"/\"proc\"");
  respond->add_option("--hub", hub_url, "Hub URL for non-local refs");
  respond->add_flag("--offline", offline, "Force template generators");

  // push / pull
  auto* push = app.add_subcommand("push", "Upload an artifact directory to a hub");
  std::string push_dir, token;
  push->add_option("--dir", push_dir, "Artifact directory")->required();
  push->add_option("--hub", hub_url, "Hub URL")->required();
  push->add_option("--token", token, "Bearer token (default: $CRSKIT_HUB_TOKEN)");

  auto* pull = app.add_subcommand("pull", "Download an artifact from a hub");
  std::string pull_name, pull_out;
  pull->add_option("--name", pull_name, "Artifact name")->required();
  pull->add_option("--hub", hub_url, "Hub URL")->required();
  pull->add_option("--out", pull_out, "Destination directory")->required();

  // hub
  auto* hub = app.add_subcommand("hub", "Serve a directory as an artifact hub");
  std::string hub_root;
  int hub_port = 8090;
  hub->add_option("--root", hub_root, "Storage directory")->required();
  hub->add_option("--port", hub_port, "Port")->capture_default_str();
  hub->add_option("--host", host, "Address to bind")->capture_default_str();
  hub->add_option("--token", token, "Token required for uploads (default: $CRSKIT_HUB_TOKEN)");

  CLI11_PARSE(app, argc, argv);

  auto env_token = [&] {
    if (!token.empty()) return token;
    const char* t = std::getenv("CRSKIT_HUB_TOKEN");
    return std::string(t ? t : "");
  };

  try {
    if (serve->parsed()) {
      auto cfg = crskit::ServeConfig::from_file(config_path);
      if (trace_export.empty()) trace_export = cfg.trace_export;
      if (!trace_export.empty()) crskit::monitor::Collector::global().set_export_path(trace_export);
      crskit::ServiceOptions opts;
      opts.session_ttl = std::chrono::seconds(cfg.session_ttl_s);
      opts.static_dir = cfg.static_dir;
      crskit::ChatService service(opts);
      crskit::load_pipelines(service, cfg, offline);
      g_on_signal = [&] { service.stop(); };
      std::signal(SIGINT, handle_signal);
      std::signal(SIGTERM, handle_signal);
      std::cerr << "serving " << cfg.pipelines.size() << " pipeline(s) on http://" << host << ":"
                << port << (offline ? " (offline)" : "") << "\n";
      service.run(host, port);
    } else if (init->parsed()) {
      auto path = crskit::write_demo_artifacts(out_dir, demo_offline, seed);
      std::cout << "wrote " << path.string() << "\n";
    } else if (respond->parsed()) {
      auto wire = read_context(context, context_file);
      if (wire.empty()) throw CLI::ValidationError("--context or --context-file is required");
      auto kwargs = crskit::Json::parse(kwargs_text);
      auto pipeline = crskit::load_pipeline(pipeline_ref, {hub_url, offline});
      auto out = pipeline->respond(std::string_view(wire), kwargs);
      std::cout << out.text << "\n";
      for (const auto& r : out.recommendations) {
        std::cout << "  " << r.item_id << "\t" << r.name << "\t" << r.score << "\n";
      }
      std::cout << "trace " << out.trace_id << "\n";
    } else if (push->parsed()) {
      std::cout << crskit::push_to_hub(push_dir, hub_url, env_token()) << "\n";
    } else if (pull->parsed()) {
      crskit::pull_from_hub(pull_name, hub_url, pull_out);
      std::cout << "pulled " << pull_name << " into " << pull_out << "\n";
    } else if (hub->parsed()) {
      auto t = env_token();
      if (t.empty()) throw CLI::ValidationError("a token is required (--token or CRSKIT_HUB_TOKEN)");
      crskit::HubServer server(hub_root, t);
      g_on_signal = [&] { server.stop(); };
      std::signal(SIGINT, handle_signal);
      std::signal(SIGTERM, handle_signal);
      std::cerr << "hub on http://" << host << ":" << hub_port << "\n";
      server.run(host, hub_port);
    }
  } catch (const CLI::Error& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
