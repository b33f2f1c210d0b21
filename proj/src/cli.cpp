#include "t2lc/cli.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <sstream>

#include "t2lc/autodiff.hpp"
#include "t2lc/dist_sim.hpp"
#include "t2lc/errors.hpp"
#include "t2lc/model_zoo.hpp"
#include "t2lc/report.hpp"
#include "t2lc/train_harness.hpp"
#include "t2lc/verify.hpp"
#include "t2lc/version.hpp"

namespace t2lc::cli {

namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A failed check; the message has already been printed.
struct CheckFailed {};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::pair<std::string, std::string>> read_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read config file " + path);
  std::vector<std::pair<std::string, std::string>> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw UsageError(path + ":" + std::to_string(lineno) + ": expected key = value");
    }
    out.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return out;
}

bool truthy(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw UsageError("config key '" + key + "' expects true or false, got '" + v + "'");
}

std::uint64_t default_seed() {
  if (const char* s = std::getenv("T2LC_SEED")) {
    try {
      std::size_t used = 0;
      const unsigned long long v = std::stoull(s, &used);
      if (used == std::string(s).size()) return v;
    } catch (const std::exception&) {
    }
    throw UsageError(std::string("T2LC_SEED must be an unsigned integer, got '") + s + "'");
  }
  return 1;
}

std::string option_value(const CLI::Option* opt) {
  if (opt->get_expected_min() == 0) return opt->count() ? "true" : "false";
  if (opt->count()) {
    if (opt->get_multi_option_policy() == CLI::MultiOptionPolicy::TakeLast) return opt->results().back();
    std::string v;
    for (const auto& r : opt->results()) v += (v.empty() ? "" : ",") + r;
    return v;
  }
  return opt->get_default_str();
}

void print_header(std::ostream& out, const CLI::App* sub, std::uint64_t seed,
                  const std::string& config_path) {
  out << "# t2lc " << kVersion << " " << sub->get_name() << "\n";
  out << "# seed: " << seed << "\n";
  if (!config_path.empty()) out << "# config file: " << config_path << "\n";
  out << "# config:";
  for (const CLI::Option* opt : sub->get_options()) {
    const std::string name = opt->get_single_name();
    if (name == "help" || name.empty()) continue;
    out << " " << name << "=" << option_value(opt);
  }
  out << "\n";
}

std::string pad(const std::string& s, std::size_t w) {
  return s.size() >= w ? s + " " : s + std::string(w - s.size(), ' ');
}

void print_table(std::ostream& out, const std::vector<std::string>& head,
                 const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> w(head.size());
  for (std::size_t c = 0; c < head.size(); ++c) w[c] = head[c].size() + 2;
  for (const auto& r : rows)
    for (std::size_t c = 0; c < r.size() && c < w.size(); ++c) w[c] = std::max(w[c], r[c].size() + 2);
  for (std::size_t c = 0; c < head.size(); ++c) out << pad(head[c], w[c]);
  out << "\n";
  for (const auto& r : rows) {
    for (std::size_t c = 0; c < r.size(); ++c) out << (c + 1 < r.size() ? pad(r[c], w[c]) : r[c]);
    out << "\n";
  }
}

std::string sig(double v) { return report::format_sig(v, 4); }

std::string millions(double v) { return sig(v / 1e6) + "M"; }

void write_output(const std::string& path, std::ostream& out,
                  const std::function<void(std::ostream&)>& emit) {
  if (path.empty()) {
    emit(out);
    return;
  }
  std::ofstream os(path);
  if (!os) throw IngestError("cannot write " + path);
  emit(os);
}

train::Dataset load_data(const std::string& spec, bool augment) {
  if (spec == "synth") {
    train::Dataset d = train::desk_dataset();
    d.augment.enabled = augment;
    return d;
  }
  const std::string prefix = "cifar10:";
  if (spec.rfind(prefix, 0) == 0) {
    return train::load_cifar10(spec.substr(prefix.size()), {true, augment});
  }
  throw ConfigError("--data must be 'synth' or 'cifar10:<dir>', got '" + spec + "'");
}

std::vector<train::LrDrop> parse_drops(const std::string& text) {
  std::vector<train::LrDrop> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    const auto colon = item.find(':');
    try {
      if (colon == std::string::npos) throw std::invalid_argument(item);
      out.push_back({std::stoul(item.substr(0, colon)), std::stod(item.substr(colon + 1))});
    } catch (const std::exception&) {
      throw ConfigError("--lr-drops expects epoch:factor[,epoch:factor...], got '" + text + "'");
    }
  }
  return out;
}

dist::Schedule parse_schedule(const std::string& s) {
  if (s == "in_order") return dist::Schedule::in_order;
  if (s == "reversed") return dist::Schedule::reversed;
  if (s == "shuffled") return dist::Schedule::shuffled;
  if (s == "threaded") return dist::Schedule::threaded;
  throw ConfigError("--schedule must be in_order, reversed, shuffled or threaded");
}

struct TrainFlags {
  std::string arch = "toy";
  std::size_t depth = 3;
  std::size_t width = 16;
  std::size_t epochs = 30;
  std::size_t batch_size = 32;
  double lr = 0.005;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::string lr_drops;
  std::string data = "synth";
  bool augment = false;
};

void add_train_flags(CLI::App* sub, TrainFlags& f) {
  sub->add_option("--arch", f.arch, "Architecture (toy)");
  sub->add_option("--depth", f.depth, "Toy depth (convertible conv layers)");
  sub->add_option("--width", f.width, "Toy width (channels)");
  sub->add_option("--epochs", f.epochs, "Epochs");
  sub->add_option("--batch-size", f.batch_size, "Minibatch size");
  sub->add_option("--lr", f.lr, "Initial learning rate");
  sub->add_option("--momentum", f.momentum, "SGD momentum");
  sub->add_option("--weight-decay", f.weight_decay, "Weight decay");
  sub->add_option("--lr-drops", f.lr_drops, "Schedule as epoch:factor,...");
  sub->add_option("--data", f.data, "synth or cifar10:<dir>");
  sub->add_flag("--augment", f.augment, "Pad-4 random crop and flip");
}

train::Hyper make_hyper(const TrainFlags& f, std::uint64_t seed) {
  train::Hyper h;
  h.epochs = f.epochs;
  h.batch_size = f.batch_size;
  h.lr = f.lr;
  h.momentum = f.momentum;
  h.weight_decay = f.weight_decay;
  h.drops = parse_drops(f.lr_drops);
  h.seed = seed;
  h.validate();
  return h;
}

void check_arch(const TrainFlags& f) {
  if (f.arch != "toy") {
    throw ConfigError("the trainer supports --arch toy only (got '" + f.arch + "')");
  }
}

}  // namespace

int run(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Two-level group convolution toolkit", "t2lc"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kVersion));
  app.option_defaults()->always_capture_default();
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

  std::uint64_t seed = 1;
  std::string format = "table";
  std::string out_path;
  std::string config_path;

  const auto common = [&](CLI::App* sub, bool with_out) {
    sub->add_option("--seed", seed, "Random seed (default: T2LC_SEED or 1)");
    sub->add_option("--format", format, "Output format")
        ->check(CLI::IsMember({"table", "csv"}));
    if (with_out) sub->add_option("--out", out_path, "Write CSV output to this file");
    sub->add_option("--config", config_path, "Flat key = value config file");
  };

  // gradcheck
  std::string op_name = "two_level";
  double fd_h = 1e-6;
  GroupSpec fd_spec{8, 12, 4, 3, 3};
  std::size_t hw = 5;
  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of an operator's VJP");
  gradcheck->set_help_flag("--help", "Print this help message and exit");
  gradcheck->add_option("--op", op_name, "Operator name or 'all'");
  gradcheck->add_option("--h", fd_h, "Central-difference step");
  gradcheck->add_option("--n", fd_spec.n, "Input channels");
  gradcheck->add_option("--m", fd_spec.m, "Output channels");
  gradcheck->add_option("--groups", fd_spec.groups, "Number of groups N");
  gradcheck->add_option("--d", fd_spec.d, "Kernel size");
  gradcheck->add_option("--d0", fd_spec.d0, "Coarse restriction kernel size");
  gradcheck->add_option("--hw", hw, "Image height and width");
  common(gradcheck, false);

  // verify
  std::string suite = "all";
  auto* verify_cmd = app.add_subcommand("verify", "Run the property suites");
  verify_cmd->add_option("--suite", suite, "algebra, gradients, distributed or all");
  common(verify_cmd, false);

  // paramcount
  std::string pc_arch = "wideresnet-28-10";
  std::string pc_variant = "sc";
  std::size_t pc_groups = 1;
  bool per_layer = false;
  auto* paramcount = app.add_subcommand("paramcount", "Parameter accounting for a model");
  paramcount->add_option("--arch", pc_arch, "wideresnet-<l>-<w>, mobilenetv2 or toy");
  paramcount->add_option("--variant", pc_variant, "sc, gc, gc2l or shuffle");
  paramcount->add_option("--groups", pc_groups, "Number of groups N");
  paramcount->add_flag("--per-layer", per_layer, "List every layer");
  common(paramcount, true);

  // simulate
  GroupSpec sim_spec{8, 12, 4, 3, 3};
  std::size_t sim_hw = 5;
  std::size_t sim_batch = 1;
  std::string sim_schedule = "in_order";
  bool show_trace = false;
  auto* simulate = app.add_subcommand("simulate", "Simulated N-worker forward pass");
  simulate->add_option("--n", sim_spec.n, "Input channels");
  simulate->add_option("--m", sim_spec.m, "Output channels");
  simulate->add_option("--groups", sim_spec.groups, "Number of workers N");
  simulate->add_option("--d", sim_spec.d, "Kernel size (also used for the restriction)");
  simulate->add_option("--hw", sim_hw, "Image height and width");
  simulate->add_option("--batch", sim_batch, "Samples per forward");
  simulate->add_option("--schedule", sim_schedule, "in_order, reversed, shuffled or threaded");
  simulate->add_flag("--trace", show_trace, "Print one line per message");
  common(simulate, true);

  // train
  TrainFlags tf;
  std::string tr_variant = "gc2l";
  std::size_t tr_groups = 4;
  bool distributed = false;
  std::string tr_schedule = "in_order";
  std::string checkpoint;
  auto* train_cmd = app.add_subcommand("train", "Train a toy network with SGD");
  add_train_flags(train_cmd, tf);
  train_cmd->add_option("--variant", tr_variant, "sc, gc, gc2l or shuffle");
  train_cmd->add_option("--groups", tr_groups, "Number of groups N");
  train_cmd->add_flag("--distributed", distributed, "Run GC/GC-2L layers on simulated workers");
  train_cmd->add_option("--schedule", tr_schedule, "Worker schedule when distributed");
  train_cmd->add_option("--checkpoint", checkpoint, "Save final parameters to this file");
  common(train_cmd, true);

  // compare
  TrainFlags cf;
  std::vector<std::size_t> cmp_groups{4};
  std::vector<std::uint64_t> cmp_seeds{1, 2, 3};
  std::vector<std::string> cmp_variants{"sc", "gc", "gc2l", "shuffle"};
  std::string summary_out;
  auto* compare = app.add_subcommand("compare", "Train every variant over seeds and group counts");
  add_train_flags(compare, cf);
  compare->add_option("--groups", cmp_groups, "Comma-separated group counts")->delimiter(',');
  compare->add_option("--seeds", cmp_seeds, "Comma-separated seeds")->delimiter(',');
  compare->add_option("--variants", cmp_variants, "Comma-separated variants")->delimiter(',');
  compare->add_option("--summary-out", summary_out, "Write the summary CSV to this file");
  common(compare, true);

  try {
    seed = default_seed();
    if (raw_args.size() <= 1) {
      err << app.help();
      return 2;
    }
    // Splice config-file entries in right after the subcommand name so that
    // later command-line flags override them.
    std::vector<std::string> args(raw_args.begin(), raw_args.end());
    std::string cfg;
    for (std::size_t i = 1; i < args.size(); ++i) {
      if (args[i] == "--config" && i + 1 < args.size()) cfg = args[i + 1];
      if (args[i].rfind("--config=", 0) == 0) cfg = args[i].substr(9);
    }
    if (!cfg.empty()) {
      std::size_t pos = 1;
      while (pos < args.size() && args[pos].rfind("-", 0) == 0) ++pos;
      if (pos == args.size()) throw UsageError("a subcommand is required");
      const CLI::App* sub = app.get_subcommand_no_throw(args[pos]);
      if (!sub) throw UsageError("unknown subcommand '" + args[pos] + "'");
      std::vector<std::string> extra;
      for (const auto& [key, value] : read_config(cfg)) {
        if (key == "config") continue;
        const CLI::Option* opt = sub->get_option_no_throw("--" + key);
        if (!opt) throw UsageError(cfg + ": unknown key '" + key + "' for " + sub->get_name());
        if (opt->get_expected_min() == 0) {
          if (truthy(value, key)) extra.push_back("--" + key);
        } else {
          extra.push_back("--" + key);
          extra.push_back(value);
        }
      }
      args.insert(args.begin() + static_cast<std::ptrdiff_t>(pos) + 1, extra.begin(), extra.end());
    }
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
      app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp&) {
      out << app.help();
      return 0;
    } catch (const CLI::CallForVersion&) {
      out << kVersion << "\n";
      return 0;
    } catch (const CLI::ParseError& e) {
      if (e.get_exit_code() == 0) {
        const CLI::App* sub = app.get_subcommands().empty() ? nullptr : app.get_subcommands()[0];
        out << (sub ? sub->help() : app.help());
        return 0;
      }
      err << "error: " << e.what() << "\n";
      err << "run 't2lc --help' for usage\n";
      return 2;
    }

    CLI::App* sub = app.get_subcommands().front();
    // Validate everything that can be checked before computing.
    if (sub == gradcheck && op_name != "all") grad::parse_op(op_name);
    if (sub == verify_cmd) verify::parse_suite(suite);
    if (sub == paramcount) {
      zoo::parse_variant(pc_variant);
      zoo::preset(pc_arch);
    }
    if (sub == simulate) {
      sim_spec.d0 = sim_spec.d;
      sim_spec.validate();
      parse_schedule(sim_schedule);
    }
    if (sub == train_cmd) {
      check_arch(tf);
      zoo::parse_variant(tr_variant);
      parse_schedule(tr_schedule);
      make_hyper(tf, seed);
    }
    if (sub == compare) {
      check_arch(cf);
      for (const auto& v : cmp_variants) zoo::parse_variant(v);
      make_hyper(cf, seed);
      if (cmp_seeds.size() < 3) throw ConfigError("compare needs at least 3 seeds");
    }

    print_header(out, sub, seed, config_path);
    const bool csv = format == "csv";

    if (sub == gradcheck) {
      std::vector<grad::OpId> ops;
      if (op_name == "all") {
        ops = grad::all_ops();
      } else {
        ops.push_back(grad::parse_op(op_name));
      }
      std::vector<std::vector<std::string>> rows;
      bool ok = true;
      for (grad::OpId op : ops) {
        const grad::OpInstance inst = grad::make_instance(op, fd_spec, hw, hw, seed);
        const grad::FdReport r = grad::finite_diff_check(inst, seed, fd_h);
        const bool pass = r.max_rel_error < 1e-5;
        ok &= pass;
        rows.push_back({std::string(grad::op_name(op)),
                        csv ? report::format_real(r.max_rel_error) : sig(r.max_rel_error), "1e-05",
                        pass ? "pass" : "FAIL", r.worst_coordinate});
      }
      const std::vector<std::string> head{"op", "max_rel_error", "threshold", "status", "worst"};
      if (csv) {
        out << "op,max_rel_error,threshold,status,worst\n";
        for (const auto& r : rows) out << r[0] << ',' << r[1] << ',' << r[2] << ',' << r[3] << ',' << r[4] << "\n";
      } else {
        print_table(out, head, rows);
      }
      return ok ? 0 : 1;
    }

    if (sub == verify_cmd) {
      const verify::Report rep = verify::run(verify::parse_suite(suite), seed);
      std::vector<std::vector<std::string>> rows;
      for (const auto& c : rep.checks) {
        rows.push_back({c.name, csv ? report::format_real(c.metric) : sig(c.metric),
                        csv ? report::format_real(c.threshold) : sig(c.threshold),
                        c.passed ? "pass" : "FAIL", c.detail});
      }
      if (csv) {
        out << "check,metric,threshold,status,detail\n";
        for (const auto& r : rows) out << r[0] << ',' << r[1] << ',' << r[2] << ',' << r[3] << ',' << r[4] << "\n";
      } else {
        print_table(out, {"check", "metric", "threshold", "status", "detail"}, rows);
      }
      if (const verify::Check* f = rep.first_failure()) {
        err << "first failure: " << f->name << " metric " << report::format_real(f->metric)
            << " > threshold " << report::format_real(f->threshold) << " (" << f->detail << ")\n";
        return 1;
      }
      return 0;
    }

    if (sub == paramcount) {
      const zoo::ArchSpec arch = zoo::preset(pc_arch);
      const zoo::ParamCount pc =
          zoo::model_param_count(arch, zoo::parse_variant(pc_variant), pc_groups);
      if (csv || !out_path.empty()) {
        zoo::ParamCount with_total = pc;
        with_total.breakdown.push_back({"total", "all", pc.total, pc.per_processor});
        write_output(out_path, out,
                     [&](std::ostream& os) { report::write_paramcount_csv(os, with_total); });
      }
      if (!csv) {
        std::vector<std::vector<std::string>> rows;
        if (per_layer) {
          for (const auto& c : pc.breakdown) {
            rows.push_back({c.layer, c.role, std::to_string(c.total), sig(c.per_processor)});
          }
        }
        for (const auto& [role, count] : pc.by_role) {
          rows.push_back({"(all)", role, std::to_string(count), ""});
        }
        rows.push_back({"total", "all", std::to_string(pc.total), sig(pc.per_processor)});
        print_table(out, {"layer", "role", "total", "per_processor"}, rows);
        out << "total parameters: " << millions(static_cast<double>(pc.total))
            << "  per processor: " << millions(pc.per_processor) << "\n";
      }
      return 0;
    }

    if (sub == simulate) {
      std::mt19937_64 rng(seed);
      const TwoLevelParams params = TwoLevelParams::random(sim_spec, rng);
      Tensor x = Tensor::batched(sim_batch, sim_spec.n, sim_hw, sim_hw);
      fill_normal(x.values(), rng);
      const dist::DistributedForward df =
          dist::forward_distributed(sim_spec, params, x, {parse_schedule(sim_schedule), seed});
      const double diff = max_rel_diff(df.output, two_level(x, sim_spec, params));
      const dist::CommReport& r = df.report;
      if (csv) {
        out << "metric,value\n";
        out << "messages," << r.messages << "\nactivation_scalars," << r.activation_scalars
            << "\nactivation_scalars_per_sample," << r.activation_scalars_per_sample()
            << "\nparameter_scalars," << r.parameter_scalars << "\nserial_max_rel_diff,"
            << report::format_real(diff) << "\n";
      } else {
        std::vector<std::vector<std::string>> rows{
            {"messages", std::to_string(r.messages)},
            {"activation_scalars", std::to_string(r.activation_scalars)},
            {"activation_scalars_per_sample", std::to_string(r.activation_scalars_per_sample())},
            {"parameter_scalars", std::to_string(r.parameter_scalars)},
            {"serial_max_rel_diff", sig(diff)}};
        for (const auto& [phase, st] : r.phases) {
          rows.push_back({"phase " + phase, std::to_string(st.messages) + " messages, " +
                                                std::to_string(st.scalars) + " scalars"});
        }
        print_table(out, {"metric", "value"}, rows);
      }
      if (show_trace || !out_path.empty()) {
        write_output(out_path, out, [&](std::ostream& os) {
          os << "phase,sender,receiver,kind,scalars\n";
          for (const auto& t : df.trace) {
            os << t.phase << ',' << t.sender << ',' << t.receiver << ','
               << dist::payload_kind_name(t.kind) << ',' << t.scalars << "\n";
          }
        });
      }
      return diff <= 1e-12 && r.parameter_scalars == 0 ? 0 : 1;
    }

    if (sub == train_cmd) {
      const train::Dataset data = load_data(tf.data, tf.augment);
      const zoo::Variant v = zoo::parse_variant(tr_variant);
      const zoo::ArchSpec arch = zoo::build_toy_arch(tf.depth, tf.width, v, tr_groups,
                                                     data.train.channels, data.classes);
      const train::Hyper hyper = make_hyper(tf, seed);
      train::TrainOptions opt;
      opt.distributed = distributed;
      opt.schedule = {parse_schedule(tr_schedule), seed};
      if (distributed && v != zoo::Variant::gc && v != zoo::Variant::gc2l) {
        throw ConfigError("--distributed needs --variant gc or gc2l");
      }
      out << "# data: " << data.provenance << "\n";
      if (!csv) {
        out << pad("epoch", 7) << pad("lr", 12) << pad("train_loss", 12) << pad("train_acc", 11)
            << pad("test_acc", 10) << "seconds\n";
        opt.on_epoch = [&](const train::EpochRecord& e) {
          out << pad(std::to_string(e.epoch), 7) << pad(sig(e.lr), 12) << pad(sig(e.train_loss), 12)
              << pad(sig(e.train_accuracy), 11) << pad(sig(e.test_accuracy), 10)
              << sig(e.wall_seconds) << "\n";
          out.flush();
        };
      }
      train::NetOptions net_opt{opt.distributed, opt.schedule, false};
      train::Network net = train::Network::build(arch, hyper.seed, net_opt);
      train::RunMeta meta{arch.name, std::string(zoo::variant_name(v)), tr_groups, hyper,
                          data.provenance, distributed};
      const train::History hist = train::train_network(net, data, hyper, meta, opt);
      if (csv || !out_path.empty()) {
        write_output(out_path, out, [&](std::ostream& os) { report::write_history_csv(os, hist); });
      }
      if (!checkpoint.empty()) train::save_checkpoint(checkpoint, net);
      if (distributed) {
        out << "# communication: " << hist.comm.messages << " messages, "
            << hist.comm.activation_scalars << " activation scalars, "
            << hist.comm.parameter_scalars << " parameter scalars\n";
      }
      if (hist.diverged) {
        err << "training diverged at epoch " << hist.diverged->epoch << " step "
            << hist.diverged->step << "\n";
        return 1;
      }
      return 0;
    }

    if (sub == compare) {
      const train::Dataset data = load_data(cf.data, cf.augment);
      check_arch(cf);
      train::CompareConfig cc;
      cc.depth = cf.depth;
      cc.width = cf.width;
      cc.groups = cmp_groups;
      cc.seeds = cmp_seeds;
      cc.variants.clear();
      for (const auto& v : cmp_variants) cc.variants.push_back(zoo::parse_variant(v));
      out << "# data: " << data.provenance << "\n";
      const train::CompareReport rep = train::compare_variants(cc, data, make_hyper(cf, seed));
      if (csv || !out_path.empty()) {
        write_output(out_path, out, [&](std::ostream& os) { report::write_compare_csv(os, rep.rows); });
      }
      if (!summary_out.empty()) {
        write_output(summary_out, out,
                     [&](std::ostream& os) { report::write_summary_csv(os, rep.summary); });
      }
      if (!csv) {
        std::vector<std::vector<std::string>> rows;
        for (const auto& s : rep.summary) {
          rows.push_back({s.variant, std::to_string(s.groups), std::to_string(s.runs),
                          s.runs ? sig(s.mean_train_loss) : "-",
                          s.runs ? sig(s.mean_test_accuracy) : "-"});
        }
        print_table(out, {"variant", "groups", "runs", "mean_train_loss", "mean_test_acc"}, rows);
        for (const auto& r : rep.rows) {
          if (r.status != "ok") {
            out << "failed: " << r.variant << " N=" << r.groups << " seed " << r.seed << ": "
                << r.status << "\n";
          }
        }
      }
      return 0;
    }
    return 2;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  std::vector<std::string> args(argv, argv + argc);
  return run(args, out, err);
}

}  // namespace t2lc::cli
