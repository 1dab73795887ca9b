// Timing comparison between the serial reference path and the OpenMP kernels
// for the rasterizer, its backward pass, the SSIM loss and batched GNS
// gradients.

#include <cstdio>

#include "ct/gns.hpp"
#include "ct/losses.hpp"
#include "ct/parallel.hpp"
#include "ct/refine.hpp"
#include "ct/scene.hpp"
#include "ct/splat.hpp"

using namespace ct;

namespace {

template <typename Fn>
double time_best_of(int reps, Fn&& fn) {
  double best = 1e300;
  for (int r = 0; r < reps; ++r) {
    double t0 = wall_seconds();
    fn();
    best = std::min(best, wall_seconds() - t0);
  }
  return best;
}

void report(const char* name, double serial_s, double parallel_s) {
  std::printf("%-24s serial %8.2f ms   openmp %8.2f ms   speedup %.2fx\n", name, 1e3 * serial_s,
              1e3 * parallel_s, serial_s / parallel_s);
}

}  // namespace

int main() {
  std::printf("threads: %d\n", max_threads());

  SceneConfig sc;
  sc.image_width = sc.image_height = 256;
  sc.resolution = 12;
  sc.timesteps = 2;
  sc.views = 1;
  sc.seed = 7;
  Scene scene = generate_scene(sc);
  AugmentedMesh state = scene.state(scene.steps());
  const CameraView& cam = scene.cameras[0];
  const GaussianCloud& cloud = scene.gt_cloud;

  RenderOutput out = render_view(cloud, state, scene.rest, cam, true);
  Image pixel_grad(cam.width, cam.height, 1.0);

  double fwd_serial = time_best_of(5, [&] { render_view(cloud, state, scene.rest, cam, false); });
  double fwd_parallel = time_best_of(5, [&] { render_view(cloud, state, scene.rest, cam, true); });
  report("render forward", fwd_serial, fwd_parallel);

  double bwd_serial =
      time_best_of(5, [&] { render_backward(out, cloud, state, scene.rest, cam, pixel_grad, false); });
  double bwd_parallel =
      time_best_of(5, [&] { render_backward(out, cloud, state, scene.rest, cam, pixel_grad, true); });
  report("render backward", bwd_serial, bwd_parallel);

  const Image& a = out.rgb;
  const Image& b = scene.observations.back()[0];
  double ssim_t = time_best_of(5, [&] { ssim_mean(a, b, 7); });
  Image g(a.width, a.height);
  double ssim_b = time_best_of(5, [&] { add_ssim_pixel_grad(a, b, 7, 1.0, g); });
  std::printf("%-24s forward %7.2f ms   backward %7.2f ms\n", "ssim (single-thread)", 1e3 * ssim_t,
              1e3 * ssim_b);

  // batched GNS training gradients: chunked over examples
  auto examples = make_training_examples(scene.gt_positions, scene.rest, scene.trajectory.actions,
                                         scene.grasped_vertex, scene.trajectory.dt);
  GnsTrainConfig tc;
  tc.epochs = 1;
  tc.batch_size = static_cast<int>(examples.size());
  double gns_serial, gns_parallel;
  {
    int saved = max_threads();
    set_max_threads(1);
    gns_serial = time_best_of(2, [&] {
      auto copy = examples;
      gns_train(std::move(copy), 3, 3, 32, tc);
    });
    set_max_threads(saved);
    gns_parallel = time_best_of(2, [&] {
      auto copy = examples;
      gns_train(std::move(copy), 3, 3, 32, tc);
    });
  }
  report("gns epoch", gns_serial, gns_parallel);

  // equivalence spot check: the parallel kernels must match the reference
  Image ref = render_view_reference(cloud, state, scene.rest, cam);
  double max_diff = 0;
  for (std::size_t i = 0; i < ref.px.size(); ++i)
    max_diff = std::max(max_diff, std::abs(ref.px[i] - out.rgb.px[i]));
  std::printf("reference max pixel diff: %.3g %s\n", max_diff, max_diff == 0.0 ? "(bit-identical)" : "");
  return 0;
}
