#include <cstdint>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "commands.hpp"
#include "fraclab/errors.hpp"
#include "fraclab/io.hpp"

int main(int argc, char** argv) {
  namespace app = fraclab::app;
  CLI::App cli{"Fractional Sobolev and interpolation space experiments"};
  cli.set_version_flag("--version", std::string("fraclab ") + FRACLAB_VERSION);
  cli.require_subcommand(1);

  std::string config_path, out_path;
  int threads = 1;
  std::uint64_t seed = 0;
  for (const auto& name : app::command_names()) {
    CLI::App* sub = cli.add_subcommand(name, "run the " + name + " suite");
    sub->add_option("--config", config_path, "JSON config file")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", out_path, "output file (stdout when omitted)");
    sub->add_option("--threads", threads, "worker threads")->check(CLI::Range(1, 1024));
    sub->add_option("--seed", seed, "random seed, recorded in the output")->required();
  }
  try {
    cli.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = cli.exit(e);
    return code == 0 ? 0 : app::kConfigInvalid;
  }
  const std::string command = cli.get_subcommands().front()->get_name();

  try {
    const auto config = nlohmann::json::parse(fraclab::read_text_file(config_path));
    const app::CommandOutput out = app::run_command(command, config, {seed, threads});
    if (out_path.empty()) {
      std::cout << out.text;
    } else {
      fraclab::write_text_file(out_path, out.text);
    }
    for (const auto& f : out.failures) std::cerr << "FAIL " << f << "\n";
    return out.exit_code;
  } catch (const nlohmann::json::parse_error& e) {
    std::cerr << "error: config is not valid JSON: " << e.what() << "\n";
    return app::kConfigInvalid;
  } catch (const fraclab::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return app::kConfigInvalid;
  } catch (const fraclab::SolverError& e) {
    std::cerr << "error: " << e.what() << " (best value " << e.best_value() << ", gap " << e.gap() << ")\n";
    return app::kSolverFailed;
  }
}
