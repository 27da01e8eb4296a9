"""Audio-visual Big Five trait regression.

Pipeline pieces, bottom to top:

- ``diffcore``   reverse-mode differentiable numpy ops + gradient checking
- ``frontend``   MFCC extraction and frame sampling/resizing
- ``msfem``      multi-scale feature enhancement with channel attention
- ``branches``   per-modality encoders that emit token sequences
- ``fusion``     bidirectional cross-attention and the regression head
- ``mas``        modality augmentation (training) and corruption scenarios
- ``model``      the assembled network with a named parameter registry
- ``trainer``    deterministic SGD loop, schedule, checkpointing
- ``metrics``    per-trait accuracy and the robustness report harness
- ``datastore``  manifests, tensor files, caching, synthetic data
- ``cli``        the ``avtraits`` command line
"""

__version__ = "0.1.0"
