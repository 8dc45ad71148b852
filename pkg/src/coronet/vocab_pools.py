"""Object label pools shared by the synthetic data generator and fixtures."""

EVENT_CLASSES = (
    ("cup", "table"),
    ("door",),
    ("book", "shelf"),
    ("laptop", "chair", "desk"),
    ("phone",),
    ("bed", "pillow", "blanket"),
    ("towel", "mirror"),
    ("sandwich", "refrigerator"),
    ("broom",),
    ("shoe", "bag"),
)

DISTRACTORS = ("wall", "ceiling", "lamp", "curtain", "carpet", "picture")

QUERY_VERBS = ("holds", "opens", "uses", "looks at", "puts down", "picks up")
