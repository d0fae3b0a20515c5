# Makes 'feeds' a sub-package of 'app'.
from .feed_parser import Create, FeedDelta, FeedRecord, NoChange, Update, diff_feed, parse_feed
