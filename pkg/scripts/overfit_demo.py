"""Train the toy CDLN on 16 length-tied essays and print the loss curve."""

import time

from cdln.models import predict_normalized
from cdln.synthetic import memorisation_setup
from cdln.training import fit_model, mse_loss


def main():
    essays, cfg, model_cfg = memorisation_setup()
    t0 = time.perf_counter()
    result = fit_model("cdln", essays, cfg, model_cfg,
                       on_epoch=lambda e, loss: print(f"epoch={e} loss={loss:.3e}") if e % 20 == 0 or e == 1 else None)
    pred = predict_normalized(result.model, essays)
    final = mse_loss(pred, [e.normalized_score for e in essays])
    print(f"train mse={final:.3e}  loss drop={result.losses[0] / result.losses[-1]:.0f}x  "
          f"({time.perf_counter() - t0:.1f}s)")


if __name__ == "__main__":
    main()
