"""Train the toy network as a CNN and as a CCNN.

The synthetic task asks whether a small patch is a checkerboard or vertical
stripes.  Both variants start from the same weights and see the same
batches; the script prints per-epoch loss and accuracy for each.

Run:  python demos/train_toy.py [epochs]
"""
import sys

from ccnn import train

epochs = int(sys.argv[1]) if len(sys.argv) > 1 else 15


def show(record):
    print(f"{record['model']:>4} epoch {record['epoch']:3d}  loss {record['loss']:.4f}  acc {record['accuracy']:.3f}")


results = train.compare(epochs=epochs, seed=0, log=show)
print(f"parameters: {results['parameters']}")
print(f"ccnn feature map before the classifier: {results['ccnn_final_map']} (submaps, height, width)")
print(f"held-out accuracy: cnn {results['cnn_test_accuracy']:.3f}, ccnn {results['ccnn_test_accuracy']:.3f}")
