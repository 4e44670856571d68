// polyrep: staged pipeline runner.
//
//   polyrep <stage> [-c config.json] [--set section.key=value]... [--force]
//                   [--blocks a,b] [--threads N]
//   polyrep show-config [-c config.json] [--set ...]

#include <iostream>

#include "CLI11.hpp"
#include "polyrep/pipeline.hpp"

namespace {

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    const auto comma = s.find(',', start);
    const auto end = comma == std::string::npos ? s.size() : comma;
    if (end > start) out.push_back(s.substr(start, end - start));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Polyrepresentation pipeline"};
  app.require_subcommand(1, 1);

  std::string config_path;
  std::vector<std::string> overrides;
  bool force = false;
  std::string blocks;
  int threads = 0;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("-c,--config", config_path, "JSON config file");
    sub->add_option("--set", overrides, "Override a config value: section.key=value");
    sub->add_option("--threads", threads, "Worker thread cap (overrides run.threads)");
  };

  for (const auto& stage : polyrep::pipeline::stage_names()) {
    CLI::App* sub = app.add_subcommand(stage, "Run the " + stage + " stage");
    add_common(sub);
    sub->add_flag("--force", force, "Rerun even if the stage is up to date");
    sub->add_option("--blocks", blocks, "Comma-separated blocks for train-eval/importance/ablate-channels, or 'all'");
  }
  CLI::App* show = app.add_subcommand("show-config", "Print the resolved config");
  add_common(show);

  CLI11_PARSE(app, argc, argv);

  polyrep::set_warning_sink([](std::string_view msg) { std::cerr << "warning: " << msg << '\n'; });
  try {
    polyrep::Config cfg = polyrep::load_config(config_path, overrides);
    if (threads > 0) cfg.run.threads = threads;
    polyrep::set_thread_cap(cfg.run.threads);

    CLI::App* chosen = app.get_subcommands().front();
    if (chosen == show) {
      std::cout << polyrep::config_to_json(cfg).dump(2) << '\n';
      return 0;
    }
    polyrep::pipeline::StageOptions opts;
    opts.force = force;
    if (!blocks.empty()) opts.blocks = split_list(blocks);
    polyrep::pipeline::Runner runner(cfg, std::cerr);
    runner.run(chosen->get_name(), opts);
  } catch (const polyrep::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
