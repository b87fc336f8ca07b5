"""Randomized-smoothing certification workbench and certificate-spoofing attacks.

The package provides, at desk scale:

* Monte-Carlo randomized-smoothing prediction and certification with
  abstention (``certspoof.smoothing``);
* trainable base classifiers, logit-averaged ensembles and denoiser
  compositions with gradient access (``certspoof.models``);
* saliency maps, region proposals and salient-region mask construction
  (``certspoof.saliency_mask``);
* the region-masked ghost-certificate attack together with the
  shadow baseline and its norm-bounded variant (``certspoof.attacks``);
* an evaluation harness with resumable trial records, metrics and
  ablations (``certspoof.evaluation``);
* dataset generation/ingestion and a command-line front end
  (``certspoof.datasets``, ``certspoof.cli``).
"""

__version__ = "0.1.0"

ABSTAIN = -1
