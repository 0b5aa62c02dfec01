// Minimal end-to-end training run, entirely in memory: small nets, a 2D
// Gaussian target at mean (3,3), and a few hundred outer steps. Prints one
// metrics row per eval. The CLI in tools/ wraps exactly this API.

#include <cstdio>

#include "mfg/config.hpp"
#include "mfg/trainer.hpp"

using namespace mfg;

int main() {
  RunConfig rc;
  rc.dim = 2;
  rc.gen_hidden = {32, 32};
  rc.disc_hidden = {32, 32};
  rc.target_mean = {3.0, 3.0};
  rc.train.outer_steps = 400;
  rc.train.batch_size = 64;
  rc.train.eval_every = 50;
  rc.train.eval_batch = 2000;
  rc.train.hjb_batch = 200;
  rc.train.seed = 7;
  validate_run_config(rc);

  TrainSetup setup;
  setup.cfg = rc.train;
  setup.gen_spec = generator_spec(rc);
  setup.disc_spec = discriminator_spec(rc);
  GaussianTarget target = gaussian_target(rc);
  setup.data = gaussian_source(target, rc.train.seed);
  setup.target_mean = target.mean;
  setup.target_cov = target.covariance;
  // Empty out_dir keeps the run off the filesystem; metrics arrive via hook.
  setup.on_metrics = [](const MetricsRecord& m) {
    std::printf("step %4lld  loss %+.4f  mean_err %.3f  cov_err %.3f  w2 %.3f\n",
                static_cast<long long>(m.step), m.total, m.mean_err, m.cov_err, m.w2);
  };

  TrainResult res = train(setup);
  std::printf("done after %lld steps\n", static_cast<long long>(res.final_step));
  return 0;
}
