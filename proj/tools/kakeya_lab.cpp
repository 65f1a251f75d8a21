// kakeya_lab: generate transversal tube arrangements, evaluate the trilinear
// functional, run the multiscale decomposition, and verify the bounds.
//
// Subcommands: gen, eval, decompose, verify, sweep.  All randomness flows from
// --seed; outputs are deterministic given the seed regardless of worker count
// (KAKEYA_LAB_THREADS caps the workers).

#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "kakeya/verify.hpp"

using namespace kakeya;

namespace {

struct Range {
    int lo = 0, hi = 0;
};

// "a..b" or a single integer
Range parse_range(const std::string& s) {
    Range r;
    auto pos = s.find("..");
    if (pos == std::string::npos) {
        r.lo = r.hi = std::stoi(s);
    } else {
        r.lo = std::stoi(s.substr(0, pos));
        r.hi = std::stoi(s.substr(pos + 2));
    }
    if (r.hi < r.lo) throw CLI::ValidationError("range", "upper bound below lower bound");
    return r;
}

std::array<int, 3> parse_counts(const std::string& s) {
    std::array<int, 3> out{};
    if (std::sscanf(s.c_str(), "%d,%d,%d", &out[0], &out[1], &out[2]) != 3)
        throw CLI::ValidationError("counts", "expected three comma-separated integers");
    return out;
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open " + path + " for writing");
    os << content;
}

void configure_common(CLI::App* cmd) {
    cmd->set_config("--config")->configurable(false);
    cmd->allow_config_extras(CLI::config_extras_mode::error);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"trilinear Kakeya arrangement laboratory"};
    app.require_subcommand(1);

    // ---- gen ---------------------------------------------------------------
    auto* gen = app.add_subcommand("gen", "generate an arrangement file");
    configure_common(gen);
    int g_j = 2, g_r = 1, g_t = 1;
    std::string g_counts = "40,40,40";
    double g_R = 16.0, g_eps = 0.5;
    std::uint64_t g_seed = 1;
    std::string g_out = "arrangement.tubes";
    std::vector<double> g_w, g_m;
    bool g_structured = false;
    gen->add_option("--j", g_j, "fine cap scale exponent");
    gen->add_option("--r", g_r, "coarse cap scale exponent");
    gen->add_option("--t", g_t, "strip direction separation exponent");
    gen->add_option("--counts", g_counts, "tubes per family, e.g. 40,40,40");
    gen->add_option("--R", g_R, "box radius");
    gen->add_option("--seed", g_seed, "random seed");
    gen->add_option("--epsilon", g_eps, "schedule increment floor");
    gen->add_option("--w", g_w, "strip direction (two reals)")->expected(2);
    gen->add_option("--m", g_m, "strip anchor in [0,2]^2 (two reals)")->expected(2);
    gen->add_flag("--structured", g_structured,
                  "concentrate anchors in the adapted cell instead of Q_R");
    gen->add_option("--out", g_out, "output path");

    // ---- eval --------------------------------------------------------------
    auto* eval = app.add_subcommand("eval", "evaluate the trilinear integral");
    configure_common(eval);
    std::string e_in, e_dump, e_format = "text";
    double e_h = 0.25;
    std::size_t e_budget = std::size_t(1) << 24;
    eval->add_option("--in", e_in, "arrangement file")->required();
    eval->add_option("--grid-h", e_h, "voxel size");
    eval->add_option("--voxel-budget", e_budget, "maximum voxel count");
    eval->add_option("--dump-counts", e_dump, "write the binary count field here");
    eval->add_option("--format", e_format, "csv or text")
        ->check(CLI::IsMember({"csv", "text"}));

    // ---- decompose -----------------------------------------------------------
    auto* dec = app.add_subcommand("decompose", "build the density profile and B sets");
    configure_common(dec);
    std::string d_in, d_out = "profile.csv", d_bdump, d_format = "csv";
    int d_s0 = 1, d_keep_col = 1, d_keep_p2 = 1, d_keep_unit = 1;
    double d_C = 4.0;
    dec->add_option("--in", d_in, "arrangement file")->required();
    dec->add_option("--out", d_out, "profile output path");
    dec->add_option("--bdump", d_bdump, "unit-cell list of B_{s0}");
    dec->add_option("--s0", d_s0, "bottom scale of the intersection");
    dec->add_option("--C", d_C, "threshold constant");
    dec->add_option("--keep-col", d_keep_col, "keep every k-th P1 column in A*[1]");
    dec->add_option("--keep-p2", d_keep_p2, "keep every k-th P2 slab in A*[1]");
    dec->add_option("--keep-unit", d_keep_unit, "keep every k-th unit cell in A*[1]");
    dec->add_option("--format", d_format, "csv or text")
        ->check(CLI::IsMember({"csv", "text"}));

    // ---- verify ---------------------------------------------------------------
    auto* ver = app.add_subcommand("verify", "run an inequality check");
    configure_common(ver);
    std::string v_check, v_in;
    double v_h = 0.25, v_C = 4.0, v_ceiling = 64.0, v_theta = 1.0;
    int v_N = 8, v_s = 1, v_lambda = 1;
    int v_keep_col = 1, v_keep_p2 = 1, v_keep_unit = 1;
    ver->add_option("--check", v_check, "lw | cord | gtem | induction")
        ->required()
        ->check(CLI::IsMember({"lw", "cord", "gtem", "induction"}));
    ver->add_option("--in", v_in, "arrangement file (cord, gtem, induction)");
    ver->add_option("--grid-h", v_h, "voxel size");
    ver->add_option("--C", v_C, "theorem threshold constant");
    ver->add_option("--ceiling", v_ceiling, "implied-constant ceiling for lemma checks");
    ver->add_option("--N", v_N, "pack size for the lw check");
    ver->add_option("--theta", v_theta, "shear wedge for the lw check");
    ver->add_option("--s", v_s, "scale for cord / induction");
    ver->add_option("--lambda", v_lambda, "scale jump for induction");
    ver->add_option("--keep-col", v_keep_col, "sparse-X knob (gtem)");
    ver->add_option("--keep-p2", v_keep_p2, "sparse-X knob (gtem)");
    ver->add_option("--keep-unit", v_keep_unit, "sparse-X knob (gtem)");

    // ---- sweep ------------------------------------------------------------------
    auto* swp = app.add_subcommand("sweep", "theta-scaling sweep");
    configure_common(swp);
    std::string s_j = "0..5", s_r = "0..2", s_t = "0..3", s_out = "sweep.csv";
    int s_trials = 3;
    std::uint64_t s_seed = 1;
    double s_h = 0.25;
    std::size_t s_budget = std::size_t(1) << 24;
    swp->add_option("--j", s_j, "j range, e.g. 1..5");
    swp->add_option("--r", s_r, "r range");
    swp->add_option("--t", s_t, "t range");
    swp->add_option("--trials", s_trials, "arrangements per cell");
    swp->add_option("--seed", s_seed, "base seed");
    swp->add_option("--grid-h", s_h, "voxel size");
    swp->add_option("--voxel-budget", s_budget, "per-cell voxel cap");
    swp->add_option("--out", s_out, "CSV output path");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*gen) {
            TypeParams p = default_params(g_r, g_j, g_t, g_eps);
            if (g_w.size() == 2) p.w = Vec2{g_w[0], g_w[1]};
            if (g_m.size() == 2) p.m = Vec2{g_m[0], g_m[1]};
            TriFamily f;
            if (g_structured) {
                f = make_structured_family(p, g_seed);
            } else {
                f = sample_family(p, parse_counts(g_counts), g_R, g_seed);
            }
            auto cert = certify(f);
            write_arrangement_file(g_out, f);
            std::printf("wrote %s: %zu + %zu + %zu tubes\n", g_out.c_str(),
                        f.families[0].size(), f.families[1].size(), f.families[2].size());
            std::printf("certificate: %s  wedge=[%.4g, %.4g] theta=%.4g triples=%lld\n",
                        cert.pass ? "PASS" : "FAIL", cert.min_wedge, cert.max_wedge, cert.theta,
                        cert.sampled_triples);
            return cert.pass ? 0 : 1;
        }

        if (*eval) {
            TriFamily f = read_arrangement_file(e_in);
            Parallelepiped region = make_axis_cube(f.R);
            Grid g = make_grid(region, e_h, 0.0, e_budget);
            auto cf = rasterize(f, g);
            if (!e_dump.empty()) export_counts(cf, e_dump);
            auto integ = trilinear_integral(cf, &region);
            double nprod = std::sqrt(static_cast<double>(f.families[0].size()) *
                                     static_cast<double>(f.families[1].size()) *
                                     static_cast<double>(f.families[2].size()));
            double ratio = nprod > 0 ? integ.value / nprod : 0.0;
            if (e_format == "csv") {
                std::printf("lhs,normalizer,ratio,ratio_theta_half\n%.10g,%.10g,%.10g,%.10g\n",
                            integ.value, nprod, ratio, ratio * std::sqrt(f.params.theta));
            } else {
                std::printf("lhs                = %.10g\n", integ.value);
                std::printf("prod |T_n|^{1/2}   = %.10g\n", nprod);
                std::printf("ratio              = %.10g\n", ratio);
                std::printf("ratio * theta^{1/2} = %.10g\n", ratio * std::sqrt(f.params.theta));
            }
            return 0;
        }

        if (*dec) {
            TriFamily f = read_arrangement_file(d_in);
            auto sched = build_schedule(f.params, f.R);
            BSetOptions opt;
            opt.s0 = d_s0;
            opt.C = d_C;
            opt.keep_every_col = d_keep_col;
            opt.keep_every_p2 = d_keep_p2;
            opt.keep_every_unit = d_keep_unit;
            auto [bs, prof] = build_Bsets(f, sched, opt);
            write_text_file(d_out, d_format == "csv" ? profile_csv(prof)
                                                     : profile_text_report(prof));
            if (!d_bdump.empty()) {
                std::ofstream os(d_bdump);
                os << "# B_{s0=" << d_s0 << "}: " << bs.B_cells.size() << " unit cells\n";
                for (const auto& c : bs.B_cells)
                    os << c.center.x << ' ' << c.center.y << ' ' << c.center.z << '\n';
            }
            std::printf("profile written to %s (%d scales)\n", d_out.c_str(), sched.S);
            if (bs.truncated) std::printf("warning: %s\n", bs.note.c_str());
            return 0;  // truncation is a warning, not a failure
        }

        if (*ver) {
            bool pass = false;
            if (v_check == "lw") {
                Vec3 v3{v_theta, 0, std::sqrt(std::max(0.0, 1.0 - v_theta * v_theta))};
                auto f = make_lw_pack(v_N, {0, 0, 1}, {0, 1, 0}, v3);
                auto box = make_axis_box({v_N / 2.0, v_N / 2.0, v_N / 2.0},
                                         {v_N / 2.0, v_N / 2.0, v_N / 2.0});
                auto rep = check_loomis_whitney(f, box, v_h, v_theta == 1.0 ? 1.1 : 2.0);
                std::printf("%s\n", render_report(rep).c_str());
                pass = rep.pass;
            } else if (v_check == "cord" || v_check == "gtem") {
                if (v_in.empty()) throw std::runtime_error("--in required for this check");
                TriFamily f = read_arrangement_file(v_in);
                auto sched = build_schedule(f.params, f.R);
                BSetOptions opt;
                opt.C = v_C;
                opt.keep_every_col = v_keep_col;
                opt.keep_every_p2 = v_keep_p2;
                opt.keep_every_unit = v_keep_unit;
                auto [bs, prof] = build_Bsets(f, sched, opt);
                if (v_check == "cord") {
                    auto rep = check_cord(f, bs, prof, v_s, v_h, v_ceiling);
                    std::printf("%s\n", render_report(rep).c_str());
                    pass = rep.pass;
                } else {
                    auto rep = check_gtem(f, bs, prof, v_C, v_h);
                    std::printf("%s\n", render_report(rep).c_str());
                    pass = rep.pass;
                }
            } else {  // induction
                if (v_in.empty()) throw std::runtime_error("--in required for this check");
                TriFamily f = read_arrangement_file(v_in);
                auto rep = check_induction_step(f, v_s, v_lambda, v_h);
                std::printf("%s\n%s\n%s\n", render_report(rep.m_ratio).c_str(),
                            render_report(rep.tubr).c_str(),
                            render_report(rep.covering).c_str());
                pass = rep.m_ratio.pass && rep.tubr.pass && rep.covering.pass;
            }
            return pass ? 0 : 1;
        }

        if (*swp) {
            SweepSpec spec;
            Range rj = parse_range(s_j), rr = parse_range(s_r), rt = parse_range(s_t);
            spec.j_lo = rj.lo;
            spec.j_hi = rj.hi;
            spec.r_lo = rr.lo;
            spec.r_hi = rr.hi;
            spec.t_lo = rt.lo;
            spec.t_hi = rt.hi;
            spec.trials = s_trials;
            spec.seed = s_seed;
            spec.h = s_h;
            spec.voxel_budget = s_budget;
            auto res = sweep_theta(spec);
            write_text_file(s_out, sweep_csv(res));
            double kappa = 0;
            for (const auto& row : res.rows)
                kappa = std::max(kappa, row.ratio * std::sqrt(row.theta));
            std::printf("sweep: %zu rows, %zu gaps -> %s\n", res.rows.size(), res.gaps.size(),
                        s_out.c_str());
            std::printf("fit: slope=%.4f intercept=%.4f residual=%.4f kappa=%.4f\n", res.slope,
                        res.intercept, res.residual, kappa);
            return 0;
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 0;
}
