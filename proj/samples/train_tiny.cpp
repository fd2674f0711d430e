// Trains the tiny preset on a handful of small synthetic scenes, saves a
// checkpoint, reloads it and evaluates.

#include <cstdio>
#include <filesystem>

#include "gazehta/gazehta.hpp"

int main(int argc, char** argv) {
  using namespace gazehta;
  const std::filesystem::path out = argc > 1 ? argv[1] : "tiny.ckpt";

  const ModelConfig mc = ModelConfig::preset("tiny");
  SynthConfig sc;
  sc.image_size = mc.input_size;
  sc.snap_grid = mc.heatmap_size.width;
  const Dataset ds = make_synthetic_dataset(sc, 16);

  TrainConfig tc;
  tc.epochs = 10;
  tc.batch_size = 4;
  tc.max_lr = 3e-3;
  TrainHooks hooks;
  hooks.on_step = [](const LogRow& r) {
    if (r.step % 10 == 0) std::printf("step %3ld  loss %.5f  lr %.2e\n", r.step, r.loss.total, r.lr);
  };
  const TrainResult r = train(mc, tc, ds, hooks);
  save_checkpoint(r.checkpoint, out);

  const EvalResult ev = evaluate(load_checkpoint(out), ds);
  std::printf("\n%s", format_table(ev.report).c_str());
  return 0;
}
