// Command-line harness for the adaptive k-NN experiments.
//
//   aknn <command> [--config FILE] [--set key=value]... [--out DIR]
//
// Exit status: 0 on success, 1 for configuration errors, 2 for data errors.

#include <aknn/experiment.hpp>

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

namespace {

struct Options {
  std::string config_file;
  std::vector<std::string> overrides;
  std::string out_dir = ".";
  bool show_config = false;
};

void write_text(const std::filesystem::path& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw aknn::DataError("cannot write " + path.string());
  f << content;
  if (!f) throw aknn::DataError("write failed for " + path.string());
}

void run(const std::string& name, const Options& opts) {
  const auto cmd = aknn::parse_command(name);
  auto config = aknn::default_config(cmd);
  if (!opts.config_file.empty()) {
    std::string text;
    try {
      text = aknn::detail::read_file(opts.config_file);
    } catch (const aknn::DataError& e) {
      throw aknn::ConfigError(e.what());
    }
    config.apply(aknn::Config::parse_text(text));
  }
  for (const auto& o : opts.overrides) config.apply_assignment(o);

  if (opts.show_config) {
    std::cout << config.canonical() << "# hash " << config.hash() << "\n";
    return;
  }

  const auto output = aknn::run_command(cmd, config);
  std::filesystem::path dir(opts.out_dir);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw aknn::DataError("cannot create output directory " + dir.string() + ": " + ec.message());
  for (const auto& t : output.tables) write_text(dir / (t.name + ".csv"), t.to_csv());
  for (const auto& f : output.files) write_text(dir / f.name, f.content);
  write_text(dir / (name + ".config"), config.canonical());
  std::cout << output.console;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adaptive k-NN classifier experiments"};
  app.require_subcommand(1);
  Options opts;
  const std::vector<std::pair<std::string, std::string>> commands{
      {"sweep-noise", "accuracy and coverage of k-NN and AKNN across label-noise levels"},
      {"sweep-k", "AKNN accuracy and coverage against a neighborhood-size cap"},
      {"validate", "Monte-Carlo checks of the uniform-convergence statements"},
      {"rates", "pointwise error probability and risk trajectories on synthetic data"},
      {"predict", "profile scan trace for a single query"},
  };
  for (const auto& [name, help] : commands) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--config", opts.config_file, "key = value configuration file");
    sub->add_option("--set", opts.overrides, "override one key, as key=value (repeatable)");
    sub->add_option("--out", opts.out_dir, "output directory for CSV, SVG and JSON files");
    sub->add_flag("--show-config", opts.show_config, "print the resolved configuration and exit");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    run(app.get_subcommands().front()->get_name(), opts);
  } catch (const aknn::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const aknn::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
