#include "commands.hpp"

#include "ffdfit/errors.hpp"
#include "ffdfit/ffd.hpp"
#include "ffdfit/fit.hpp"
#include "ffdfit/io.hpp"
#include "ffdfit/metrics.hpp"
#include "ffdfit/retrieval.hpp"

#include <fmt/core.h>
#include <json.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <sstream>

namespace ffdfit::cli {
namespace {

namespace fs = std::filesystem;

std::ofstream open_for_writing(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw CommandError("cannot write " + path.string(), kInputError);
  return out;
}

template <typename Writer>
void write_text(const fs::path& path, Writer&& writer) {
  auto out = open_for_writing(path);
  writer(out);
  if (!out) throw CommandError("failed writing " + path.string(), kInputError);
}

void save_cloud(const fs::path& path, const PointCloud& pc) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  write_point_cloud(path, pc);
}

bool is_mesh_path(const fs::path& path) {
  auto ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".obj";
}

// Point clouds are read as-is; meshes are sampled with `points` surface points.
PointCloud load_points(const fs::path& path, std::size_t points, std::uint64_t seed) {
  if (is_mesh_path(path)) return sample_surface(load_mesh(path), points, seed);
  return read_point_cloud(path);
}

Feature read_descriptor(const PointCloud& pc, const DescriptorOptions& options) {
  return shape_descriptor(pc, options);
}

EncoderParams params_or_identity(const std::string& path, const TemplateDatabase& db) {
  if (!path.empty()) return load_params(path);
  return EncoderParams::identity(static_cast<int>(db.entries().front().descriptor.size()));
}

TemplateDatabase load_nonempty_db(const fs::path& dir) {
  auto db = TemplateDatabase::load(dir);
  if (db.empty()) throw CommandError("template database " + dir.string() + " is empty", kEmptyDatabase);
  return db;
}

double rounded(double value) { return std::stod(format_real(value)); }

void info(const GlobalOptions& g, const std::string& message) {
  if (!g.quiet) fmt::print(stderr, "{}\n", message);
}

// ---------------------------------------------------------------------------

void add_sample(CLI::App& app, GlobalOptions& g) {
  struct Args {
    std::string mesh, out;
    std::size_t points = 1024;
  };
  auto args = std::make_shared<Args>();
  auto* cmd = app.add_subcommand("sample", "Sample points uniformly over a mesh surface");
  cmd->add_option("mesh", args->mesh, "Input OBJ mesh")->required();
  cmd->add_option("-n,--points", args->points, "Number of points")->check(CLI::PositiveNumber);
  cmd->add_option("-o,--out", args->out, "Output point cloud (.xyz or .ply)")->required();
  cmd->callback([args, &g] {
    const auto pc = sample_surface(load_mesh(args->mesh), args->points, g.seed);
    save_cloud(args->out, pc);
    info(g, fmt::format("wrote {} points to {}", pc.size(), args->out));
  });
}

void add_resample(CLI::App& app, GlobalOptions& g) {
  struct Args {
    std::string cloud, out;
    std::size_t points = 1024;
  };
  auto args = std::make_shared<Args>();
  auto* cmd = app.add_subcommand("resample", "Draw a fixed number of points from a cloud");
  cmd->add_option("cloud", args->cloud, "Input point cloud or OBJ mesh")->required();
  cmd->add_option("-n,--points", args->points, "Number of points")->check(CLI::PositiveNumber);
  cmd->add_option("-o,--out", args->out, "Output point cloud")->required();
  cmd->callback([args, &g] {
    const auto pc = resample(load_points(args->cloud, args->points, g.seed), args->points, g.seed);
    save_cloud(args->out, pc);
    info(g, fmt::format("wrote {} points to {}", pc.size(), args->out));
  });
}

void add_normalize(CLI::App& app, GlobalOptions& g) {
  struct Args {
    std::string cloud, out, transform;
  };
  auto args = std::make_shared<Args>();
  auto* cmd = app.add_subcommand("normalize", "Centre, floor and scale a cloud into the unit ball");
  cmd->add_option("cloud", args->cloud, "Input point cloud")->required();
  cmd->add_option("-o,--out", args->out, "Output point cloud")->required();
  cmd->add_option("--transform", args->transform, "Also write the applied 'scale tx ty tz' here");
  cmd->callback([args, &g] {
    const auto n = normalize_for_eval(read_point_cloud(args->cloud));
    save_cloud(args->out, n.cloud);
    if (!args->transform.empty()) {
      write_text(args->transform, [&](std::ostream& out) { write_transform(out, n.transform); });
    }
    info(g, fmt::format("wrote {}", args->out));
  });
}

void add_voxelize(CLI::App& app, GlobalOptions& g) {
  struct Args {
    std::string input, out;
    int resolution = 32;
    std::vector<double> extent;
    std::size_t points = 16384;
  };
  auto args = std::make_shared<Args>();
  auto* cmd = app.add_subcommand("voxelize", "Rasterize a point cloud (or densely sampled mesh) to occupancy");
  cmd->add_option("input", args->input, "Point cloud, or OBJ mesh to sample first")->required();
  cmd->add_option("-r,--resolution", args->resolution, "Cells per axis")->check(CLI::PositiveNumber);
  cmd->add_option("--extent", args->extent, "Grid box 'ax ay az bx by bz' (default: padded bounds)")
      ->expected(6);
  cmd->add_option("-n,--points", args->points, "Surface samples when the input is a mesh")
      ->check(CLI::PositiveNumber);
  cmd->add_option("-o,--out", args->out, "Output grid file")->required();
  cmd->callback([args, &g] {
    const auto pc = load_points(args->input, args->points, g.seed);
    VoxelGrid grid;
    if (args->extent.empty()) {
      grid = voxelize(pc, args->resolution);
    } else {
      const auto& e = args->extent;
      grid = voxelize(pc, args->resolution, Box{Vec3(e[0], e[1], e[2]), Vec3(e[3], e[4], e[5])});
    }
    write_text(args->out, [&](std::ostream& out) { write_voxel_grid(out, grid); });
    info(g, fmt::format("wrote {}^3 grid with {} occupied cells", grid.resolution, grid.occupied_count()));
  });
}

void add_metric(CLI::App& app, GlobalOptions& g) {
  struct Args {
    std::string kind, a, b, assignment;
    std::size_t resample_to = 0;
  };
  auto args = std::make_shared<Args>();
  auto* cmd = app.add_subcommand("metric", "Chamfer ('cd_sum cd_avg') or exact EMD between two clouds");
  cmd->add_option("kind", args->kind, "cd or emd")->required()->check(CLI::IsMember({"cd", "emd"}));
  cmd->add_option("cloud_a", args->a, "First point cloud")->required();
  cmd->add_option("cloud_b", args->b, "Second point cloud")->required();
  cmd->add_option("--resample", args->resample_to, "Resample both clouds to this many points first");
  cmd->add_option("--assignment", args->assignment, "For emd, write the matching as 'i j' lines");
  cmd->callback([args, &g] {
    auto a = read_point_cloud(args->a);
    auto b = read_point_cloud(args->b);
    if (args->resample_to > 0) {
      a = resample(a, args->resample_to, g.seed);
      b = resample(b, args->resample_to, g.seed + 1);
    }
    if (args->kind == "cd") {
      const auto v = chamfer_fast(a, b);
      fmt::print("{:.9f} {:.9f}\n", v.sum(), v.average());
      return;
    }
    if (a.size() != b.size()) {
      throw SizeMismatch(fmt::format("emd needs equal point counts, got {} and {} (use --resample)",
                                     a.size(), b.size()));
    }
    const auto assignment = emd_exact(a, b);
    fmt::print("{:.9f}\n", assignment.cost);
    if (!args->assignment.empty()) {
      write_text(args->assignment, [&](std::ostream& out) {
        for (std::size_t i = 0; i < assignment.mapping.size(); ++i) out << i << ' ' << assignment.mapping[i] << '\n';
      });
    }
  });
}

void add_deform(CLI::App& app, GlobalOptions& g) {
  struct Args {
    std::string cloud, field, out, domain_from;
    double padding = 0.05;
  };
  auto args = std::make_shared<Args>();
  auto* cmd = app.add_subcommand("deform", "Apply a control-offset field to a point cloud");
  cmd->add_option("cloud", args->cloud, "Input point cloud")->required();
  cmd->add_option("-f,--field", args->field, "Deformation field file")->required();
  cmd->add_option("-o,--out", args->out, "Output point cloud")->required();
  cmd->add_option("--domain-from", args->domain_from,
                  "Cloud whose padded bounds define the lattice (default: the input cloud)");
  cmd->add_option("--padding", args->padding, "Lattice padding as a fraction of the largest side");
  cmd->callback([args, &g] {
    const auto pc = read_point_cloud(args->cloud);
    const auto field = load_field(args->field);
    const auto reference = args->domain_from.empty() ? pc : read_point_cloud(args->domain_from);
    const auto lattice = ControlLattice::around(reference, field.degrees, args->padding);
    const auto weights = compute_weights(lattice, pc);
    save_cloud(args->out, deform(weights, field, pc));
    info(g, fmt::format("wrote {} ({} points outside the lattice were clamped)", args->out,
                        weights.clamped_count()));
  });
}

struct FitOverrides {
  std::string config;
  std::vector<std::string> settings;
  std::string loss;
  std::optional<int> iterations;
  std::optional<double> lambda_smooth, lambda_l1, lr;
  std::size_t resample_to = 0;
};

void add_fit_options(CLI::App* cmd, FitOverrides& o) {
  cmd->add_option("-c,--config", o.config, "key=value fit configuration file");
  cmd->add_option("--set", o.settings, "Extra key=value setting (repeatable, applied last)")
      ->default_str("");
  cmd->add_option("--loss", o.loss, "chamfer, emd_fixed or emd_true");
  cmd->add_option("--iterations", o.iterations, "Optimizer iterations");
  cmd->add_option("--lambda-smooth", o.lambda_smooth, "Weight of the lattice smoothness term");
  cmd->add_option("--lambda-l1", o.lambda_l1, "Weight of the L1 displacement term");
  cmd->add_option("--lr", o.lr, "Initial learning rate");
  cmd->add_option("--resample", o.resample_to, "Resample template and target to this many points");
}

FitConfig build_config(const FitOverrides& o, const GlobalOptions& g) {
  FitConfig config;
  if (!o.config.empty()) {
    require_file(o.config);
    std::ifstream in(o.config);
    config = parse_fit_config(in);
  }
  if (!o.loss.empty()) config.loss = parse_loss_kind(o.loss);
  if (o.iterations) config.iterations = *o.iterations;
  if (o.lambda_smooth) config.regularizer_weights.lambda_smooth = *o.lambda_smooth;
  if (o.lambda_l1) config.regularizer_weights.lambda_l1 = *o.lambda_l1;
  if (o.lr) config.lr_initial = *o.lr;
  for (const auto& s : o.settings) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError("expected key=value, got '" + s + "'", s);
    set_config_value(config, s.substr(0, eq), s.substr(eq + 1));
  }
  if (g.seed_given) config.seed = g.seed;
  config.validate();
  return config;
}

struct FitOutcome {
  FitResult result;
  PointCloud deformed;
  double initial_cd = 0.0;
  double final_cd = 0.0;
};

FitOutcome run_fit(const PointCloud& tmpl, const PointCloud& target, const FitConfig& config) {
  const int degree = config.lattice_degree;
  const auto lattice = ControlLattice::around(tmpl, {degree, degree, degree}, config.lattice_padding);
  try {
    auto result = fit_deformation(tmpl, target, lattice, config);
    auto moved = deform(lattice, result.field, tmpl);
    const double initial = chamfer_fast(tmpl, target).sum();
    const double final_cd = chamfer_fast(moved, target).sum();
    return {std::move(result), std::move(moved), initial, final_cd};
  } catch (const FitDiverged& e) {
    throw CommandError(fmt::format("fit failed: {} after {} iterations", e.what(), e.trace().size()),
                       kFitFailed);
  } catch (const SizeMismatch& e) {
    throw CommandError(std::string("fit failed: ") + e.what(), kFitFailed);
  } catch (const DegenerateGeometry& e) {
    throw CommandError(std::string("fit failed: ") + e.what(), kFitFailed);
  }
}

void write_fit_outputs(const fs::path& dir, const FitOutcome& outcome) {
  fs::create_directories(dir);
  save_cloud(dir / "deformed.xyz", outcome.deformed);
  write_text(dir / "field.txt", [&](std::ostream& out) { write_field(out, outcome.result.field); });
  write_text(dir / "trace.csv", [&](std::ostream& out) { write_trace_csv(out, outcome.result.trace); });
}

void add_fit(CLI::App& app, GlobalOptions& g) {
  struct Args {
    std::string tmpl, target, out_dir;
    FitOverrides overrides;
  };
  auto args = std::make_shared<Args>();
  auto* cmd = app.add_subcommand("fit", "Optimize lattice offsets deforming a template onto a target");
  cmd->add_option("template", args->tmpl, "Template point cloud")->required();
  cmd->add_option("target", args->target, "Target point cloud")->required();
  cmd->add_option("-o,--out-dir", args->out_dir, "Directory for deformed.xyz, field.txt, trace.csv")
      ->required();
  add_fit_options(cmd, args->overrides);
  cmd->callback([args, &g] {
    const auto config = build_config(args->overrides, g);
    auto tmpl = read_point_cloud(args->tmpl);
    auto target = read_point_cloud(args->target);
    if (args->overrides.resample_to > 0) {
      tmpl = resample(tmpl, args->overrides.resample_to, config.seed);
      target = resample(target, args->overrides.resample_to, config.seed + 1);
    }
    const auto outcome = run_fit(tmpl, target, config);
    write_fit_outputs(args->out_dir, outcome);
    fmt::print("initial_cd {:.9g}\nfinal_cd {:.9g}\n", outcome.initial_cd, outcome.final_cd);
    info(g, fmt::format("wrote results to {}", args->out_dir));
  });
}

void add_db_build(CLI::App& app, GlobalOptions& g) {
  struct Args {
    std::vector<std::string> inputs;
    std::string out, params;
    int bins = 64;
    std::size_t pairs = 4096;
  };
  auto args = std::make_shared<Args>();
  auto* cmd = app.add_subcommand("db-build", "Build a template database from point-cloud files");
  cmd->add_option("inputs", args->inputs, "Point-cloud files or directories containing them")->required();
  cmd->add_option("-o,--out", args->out, "Database directory")->required();
  cmd->add_option("--bins", args->bins, "Distance histogram bins")->check(CLI::Range(2, 4096));
  cmd->add_option("--pairs", args->pairs, "Random point pairs per descriptor");
  cmd->callback([args, &g] {
    std::vector<fs::path> files;
    for (const auto& in : args->inputs) {
      if (fs::is_directory(in)) {
        for (const auto& entry : fs::directory_iterator(in)) {
          const auto ext = entry.path().extension().string();
          if (entry.is_regular_file() && (ext == ".xyz" || ext == ".ply" || ext == ".pts")) {
            files.push_back(entry.path());
          }
        }
      } else {
        require_file(in);
        files.emplace_back(in);
      }
    }
    std::sort(files.begin(), files.end());
    TemplateDatabase db;
    const DescriptorOptions options{args->bins, args->pairs, g.seed};
    for (const auto& f : files) {
      db.add(f.stem().string(), read_descriptor(read_point_cloud(f), options), fs::absolute(f));
    }
    db.save(args->out);
    info(g, fmt::format("indexed {} templates in {}", db.size(), args->out));
  });
}

std::vector<RetrievalMatch> query_db(const TemplateDatabase& db, const PointCloud& query,
                                     const EncoderParams& params, std::size_t k, std::uint64_t seed) {
  const auto dim = db.entries().front().descriptor.size();
  const DescriptorOptions options{static_cast<int>(dim) - kMomentCount, 4096, seed};
  return knn_retrieve(read_descriptor(query, options), db, params, std::min(k, db.size()));
}

void add_db_query(CLI::App& app, GlobalOptions& g) {
  struct Args {
    std::string db, query, params;
    std::size_t k = kDefaultRetrievalK;
  };
  auto args = std::make_shared<Args>();
  auto* cmd = app.add_subcommand("db-query", "List the K nearest templates to a query cloud");
  cmd->add_option("db", args->db, "Database directory")->required();
  cmd->add_option("query", args->query, "Query point cloud")->required();
  cmd->add_option("-k,--k", args->k, "Number of neighbours")->check(CLI::PositiveNumber);
  cmd->add_option("--params", args->params, "Encoder parameters (default: identity)");
  cmd->callback([args, &g] {
    const auto db = load_nonempty_db(args->db);
    const auto params = params_or_identity(args->params, db);
    const auto matches = query_db(db, read_point_cloud(args->query), params, args->k, g.seed);
    for (std::size_t r = 0; r < matches.size(); ++r) {
      fmt::print("{} {} {:.9g}\n", r + 1, matches[r].id, matches[r].distance);
    }
  });
}

void add_embed_train(CLI::App& app, GlobalOptions& g) {
  struct Args {
    std::string db, labels, out;
    int dim = 32, epochs = 200;
    double margin = 1.0, lr = 0.25;
    int resamplings = 2;
    std::size_t points = 1024;
  };
  auto args = std::make_shared<Args>();
  auto* cmd = app.add_subcommand("embed-train", "Train the linear retrieval encoder on labelled templates");
  cmd->add_option("db", args->db, "Database directory")->required();
  cmd->add_option("-l,--labels", args->labels, "File of 'id class' lines")->required();
  cmd->add_option("-o,--out", args->out, "Output encoder parameters")->required();
  cmd->add_option("--dim", args->dim, "Embedding dimension")->check(CLI::Range(2, 4096));
  cmd->add_option("--epochs", args->epochs, "Training epochs")->check(CLI::NonNegativeNumber);
  cmd->add_option("--margin", args->margin, "Margin between classes");
  cmd->add_option("--lr", args->lr, "Step length (gradient norm is clipped to 1)");
  cmd->add_option("--resamplings", args->resamplings, "Independent resamplings per template")
      ->check(CLI::Range(2, 64));
  cmd->add_option("-n,--points", args->points, "Points per resampling")->check(CLI::PositiveNumber);
  cmd->callback([args, &g] {
    const auto db = load_nonempty_db(args->db);
    require_file(args->labels);
    std::ifstream in(args->labels);
    std::map<std::string, int> label_of;
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
      ++number;
      std::istringstream fields(line);
      std::string id;
      int label = 0;
      if (!(fields >> id)) continue;
      if (!(fields >> label)) throw ParseError("expected 'id class'", number);
      label_of[id] = label;
    }

    const int bins = static_cast<int>(db.entries().front().descriptor.size()) - kMomentCount;
    EmbeddingBatch batch;
    for (std::size_t s = 0; s < db.size(); ++s) {
      const auto& e = db.entries()[s];
      const auto it = label_of.find(e.id);
      if (it == label_of.end()) throw CommandError("no label for template '" + e.id + "'", kInputError);
      const auto cloud = read_point_cloud(e.cloud_path);
      for (int r = 0; r < args->resamplings; ++r) {
        const std::uint64_t seed = g.seed + 1000 * s + static_cast<std::uint64_t>(r);
        batch.features.push_back(
            read_descriptor(resample(cloud, std::min(args->points, cloud.size()), seed), {bins, 4096, seed}));
        batch.labels.push_back(it->second);
        batch.instances.push_back(static_cast<int>(s));
      }
    }
    const auto init = EncoderParams::random(args->dim, static_cast<int>(batch.features.front().size()), g.seed);
    const auto result = train_encoder({batch}, init, {args->margin, args->epochs, args->lr, g.seed});
    save_params(args->out, result.params);
    const auto violations = triplet_margin_violations(embed_batch(batch, result.params), args->margin);
    info(g, fmt::format("trained {} epochs; final loss {:.9g}; margin violations {}", args->epochs,
                        result.epoch_loss.empty() ? 0.0 : result.epoch_loss.back(), violations.count));
  });
}

struct Manifest {
  std::string db, query, out_dir, config, params;
  std::size_t k = kDefaultRetrievalK;
  std::optional<std::uint64_t> seed;
};

Manifest read_manifest(const fs::path& path) {
  require_file(path);
  std::ifstream in(path);
  Manifest m;
  std::string text;
  std::size_t line = 0;
  const fs::path base = path.parent_path();
  auto resolve = [&](const std::string& v) { return fs::path(v).is_absolute() ? v : (base / v).string(); };
  while (std::getline(in, text)) {
    ++line;
    if (const auto hash = text.find('#'); hash != std::string::npos) text.erase(hash);
    const auto eq = text.find('=');
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    if (eq == std::string::npos) throw ParseError("expected key=value in manifest", line);
    auto trim = [](std::string s) {
      s.erase(0, s.find_first_not_of(" \t\r"));
      s.erase(s.find_last_not_of(" \t\r") + 1);
      return s;
    };
    const std::string key = trim(text.substr(0, eq)), value = trim(text.substr(eq + 1));
    if (key == "db") m.db = resolve(value);
    else if (key == "query") m.query = resolve(value);
    else if (key == "out") m.out_dir = resolve(value);
    else if (key == "config") m.config = resolve(value);
    else if (key == "params") m.params = resolve(value);
    else if (key == "k") m.k = std::stoul(value);
    else if (key == "seed") m.seed = std::stoull(value);
    else throw ConfigError("unknown manifest key '" + key + "'", key);
  }
  return m;
}

void add_reconstruct(CLI::App& app, GlobalOptions& g) {
  struct Args {
    std::string manifest;
    Manifest m;
    std::optional<std::size_t> k;
    bool best = false, try_all = false;
    FitOverrides overrides;
  };
  auto args = std::make_shared<Args>();
  auto* cmd = app.add_subcommand("reconstruct", "Retrieve templates for a query cloud and fit the chosen one");
  cmd->add_option("--manifest", args->manifest, "key=value file with db, query, out, config, k, seed, params");
  cmd->add_option("--db", args->m.db, "Database directory");
  cmd->add_option("--query", args->m.query, "Query point cloud");
  cmd->add_option("-o,--out-dir", args->m.out_dir, "Output directory");
  cmd->add_option("--params", args->m.params, "Encoder parameters (default: identity)");
  cmd->add_option("-k,--k", args->k, "Number of retrieved candidates")->check(CLI::PositiveNumber);
  auto* best = cmd->add_flag("--best", args->best, "Fit the nearest template instead of a random top-K one");
  cmd->add_flag("--try-all", args->try_all, "Fit every top-K template and keep the lowest final CD")
      ->excludes(best);
  add_fit_options(cmd, args->overrides);
  cmd->callback([args, &g] {
    Manifest m = args->m;
    if (!args->manifest.empty()) {
      const auto file = read_manifest(args->manifest);
      if (m.db.empty()) m.db = file.db;
      if (m.query.empty()) m.query = file.query;
      if (m.out_dir.empty()) m.out_dir = file.out_dir;
      if (m.params.empty()) m.params = file.params;
      if (args->overrides.config.empty()) args->overrides.config = file.config;
      m.k = file.k;
      if (file.seed && !g.seed_given) {
        g.seed = *file.seed;
        g.seed_given = true;
      }
    }
    if (args->k) m.k = *args->k;
    if (m.db.empty() || m.query.empty() || m.out_dir.empty()) {
      throw CommandError("reconstruct needs a database, a query and an output directory", kUsage);
    }
    const auto config = build_config(args->overrides, g);
    const auto db = load_nonempty_db(m.db);
    const auto params = params_or_identity(m.params, db);
    auto query = read_point_cloud(m.query);
    if (args->overrides.resample_to > 0) query = resample(query, args->overrides.resample_to, config.seed);
    const auto matches = query_db(db, query, params, m.k, g.seed);

    std::vector<std::size_t> candidates;
    if (args->try_all) {
      for (std::size_t r = 0; r < matches.size(); ++r) candidates.push_back(r);
    } else if (args->best) {
      candidates.push_back(0);
    } else {
      std::mt19937_64 rng(g.seed);
      candidates.push_back(std::uniform_int_distribution<std::size_t>(0, matches.size() - 1)(rng));
    }

    nlohmann::ordered_json report;
    report["query"] = m.query;
    report["k"] = matches.size();
    report["retrieved"] = nlohmann::ordered_json::array();
    for (std::size_t r = 0; r < matches.size(); ++r) {
      report["retrieved"].push_back({{"rank", r + 1}, {"id", matches[r].id}, {"distance", rounded(matches[r].distance)}});
    }

    std::optional<FitOutcome> chosen;
    std::size_t chosen_rank = 0;
    report["fits"] = nlohmann::ordered_json::array();
    for (std::size_t r : candidates) {
      auto tmpl = read_point_cloud(db.find(matches[r].id).cloud_path);
      if (args->overrides.resample_to > 0) tmpl = resample(tmpl, args->overrides.resample_to, config.seed + 1);
      auto outcome = run_fit(tmpl, query, config);
      report["fits"].push_back({{"id", matches[r].id},
                                {"initial_cd", rounded(outcome.initial_cd)},
                                {"final_cd", rounded(outcome.final_cd)}});
      const bool better = !chosen || outcome.final_cd < chosen->final_cd ||
                          (outcome.final_cd == chosen->final_cd && matches[r].id < matches[chosen_rank].id);
      if (better) {
        chosen = std::move(outcome);
        chosen_rank = r;
      }
    }

    write_fit_outputs(m.out_dir, *chosen);
    report["template"] = matches[chosen_rank].id;
    report["rank"] = chosen_rank + 1;
    report["initial_cd"] = rounded(chosen->initial_cd);
    report["final_cd"] = rounded(chosen->final_cd);
    write_text(fs::path(m.out_dir) / "report.json", [&](std::ostream& out) { out << report.dump(2) << '\n'; });
    fmt::print("template {} (rank {})\ninitial_cd {:.9g}\nfinal_cd {:.9g}\n", matches[chosen_rank].id,
               chosen_rank + 1, chosen->initial_cd, chosen->final_cd);
  });
}

}  // namespace

void register_commands(CLI::App& app, GlobalOptions& g) {
  add_sample(app, g);
  add_resample(app, g);
  add_normalize(app, g);
  add_voxelize(app, g);
  add_metric(app, g);
  add_deform(app, g);
  add_fit(app, g);
  add_db_build(app, g);
  add_db_query(app, g);
  add_embed_train(app, g);
  add_reconstruct(app, g);
}

}  // namespace ffdfit::cli
